import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "CHEMDIM_THREADS"


def resolve_threads(threads=None) -> int:
    """Thread count from the argument, else ``CHEMDIM_THREADS``, else 1."""
    if threads is None:
        threads = os.environ.get(ENV_THREADS, 1)
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise ValueError(f"invalid thread count {threads!r}") from None
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def map_ordered(fn, items, threads=None) -> list:
    """``list(map(fn, items))``, optionally on a thread pool; order is preserved.

    Work items must not share mutable state, so results do not depend on the
    thread count.
    """
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
