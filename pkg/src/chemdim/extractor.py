"""Endmember extraction by candidate swapping, and abundance reconstruction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import map_ordered
from .core import AbundanceMap, PixelIndexMap, ValidationError, as_axis, refold
from .metrics import floor_residuals, row_entropies
from .numerics import nnls_batch
from .simplex import CandidateMatrix

log = logging.getLogger(__name__)

RECONSTRUCT_CHUNK = 4096


@dataclass
class EndmemberSet:
    """Selected endmembers: rows of the candidate matrix.

    ``candidate_idx[j]`` is the candidate row of endmember ``j`` and
    ``source_rows[j]`` its row in the original data (when known).
    ``history`` holds ``P_L2`` before the first swap and after each accepted
    swap; ``swaps`` lists ``(candidate, slot, P_L2, P_S)`` per swap.
    """

    spectra: np.ndarray
    candidate_idx: np.ndarray
    source_rows: Optional[np.ndarray] = None
    p_l2: float = np.nan
    p_s: float = np.nan
    history: list = field(default_factory=list)
    swaps: list = field(default_factory=list)
    passes: int = 0

    @property
    def k(self) -> int:
        return int(self.spectra.shape[0])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "candidate_idx": self.candidate_idx.tolist(),
            "source_rows": None if self.source_rows is None else self.source_rows.tolist(),
            "p_l2": self.p_l2,
            "p_s": self.p_s,
            "p_l2_history": self.history,
            "swaps": [{"candidate": c, "slot": j, "p_l2": l2, "p_s": ps}
                      for c, j, l2, ps in self.swaps],
            "passes": self.passes,
        }


def _spectra(v):
    if isinstance(v, CandidateMatrix):
        return v.spectra, v.source
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise ValidationError("candidate matrix must be 2-D")
    return v, None


def _unique_rows(v):
    """Exact-duplicate grouping: ``(unique_rows, first_index, inverse, counts)``."""
    _, first, inverse, counts = np.unique(v, axis=0, return_index=True, return_inverse=True,
                                          return_counts=True)
    # keep unique rows in order of first appearance
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return v[first[order]], first[order], rank[inverse.reshape(-1)], counts[order]


def init_endmembers(v, k: int) -> EndmemberSet:
    """The ``k`` distinct candidates with the smallest l2 norms.

    Exact duplicates of an already chosen row are skipped; norm ties go to
    the lower candidate index.
    """
    spectra, source = _spectra(v)
    if k < 1:
        raise ValidationError("k must be >= 1")
    norms = np.linalg.norm(spectra, axis=1)
    chosen = []
    for r in np.argsort(norms, kind="stable"):
        if not any(np.array_equal(spectra[r], spectra[c]) for c in chosen):
            chosen.append(int(r))
            if len(chosen) == k:
                break
    if len(chosen) < k:
        raise ValidationError(f"only {len(chosen)} distinct candidates, cannot select k={k}")
    idx = np.array(chosen)
    return EndmemberSet(spectra[idx].copy(), idx, None if source is None else source[idx].copy())


def score_set(e, v, nu=None):
    """``(P_L2, P_S)`` of reconstructing every candidate from the endmembers.

    Each candidate row is fitted by NNLS on the endmember spectra; ``P_L2``
    sums the squared residual norms and ``P_S`` the residual entropies.
    Residuals at roundoff level count as exact fits.
    """
    e = e.spectra if isinstance(e, EndmemberSet) else np.asarray(e, dtype=np.float64)
    spectra, _ = _spectra(v)
    if e.ndim != 2 or e.shape[1] != spectra.shape[1]:
        raise ValidationError("endmembers and candidates must share the channel count")
    nu = as_axis(nu, spectra.shape[1]).values
    x = nnls_batch(e.T, spectra.T)
    r = floor_residuals(spectra - x.T @ e, spectra)
    return float(np.sum(r * r)), float(row_entropies(r, nu).sum())


class _Scorer:
    """Scores endmember subsets of the distinct candidate rows.

    NNLS runs on coordinates in an orthonormal basis of the candidate span,
    where residual norms are unchanged; residual entropies need the full
    spectra and are computed from the fitted weights. Duplicate candidates
    count with their multiplicity.
    """

    def __init__(self, unique, counts, nu):
        self.unique = unique
        self.w = counts.astype(np.float64)
        self.nu = nu
        if unique.shape[0] < unique.shape[1]:
            _, self.coords = np.linalg.qr(unique.T)   # unique.T = Q @ coords
        else:
            self.coords = unique.T

    def __call__(self, members):
        x = nnls_batch(self.coords[:, members], self.coords)
        r = floor_residuals(self.unique - x.T @ self.unique[members], self.unique)
        l2 = float(self.w @ np.einsum("ij,ij->i", r, r))
        ps = float(self.w @ row_entropies(r, self.nu))
        return l2, ps


def extract(v, k: int, nu=None, init: Optional[EndmemberSet] = None, max_passes: int = 1000,
            threads=None) -> EndmemberSet:
    """Swap candidates into the endmember set while they lower ``P_L2``.

    Candidates are visited in index order. For each, all ``k`` single-slot
    substitutions that keep the set pairwise distinct are scored; among those
    with a strictly lower ``P_L2`` the one with the highest ``P_S`` is
    accepted. Passes repeat until one makes no swap.
    """
    spectra, source = _spectra(v)
    m, p = spectra.shape
    if k < 1:
        raise ValidationError("k must be >= 1")
    nu = as_axis(nu, p).values
    start = init_endmembers(v, k) if init is None else init
    if start.k != k:
        raise ValidationError(f"initial set has {start.k} endmembers, expected {k}")

    unique, first, inverse, counts = _unique_rows(spectra)
    scorer = _Scorer(unique, counts, nu)
    # members are tracked as distinct-row ids, which makes distinctness exact
    members = [int(inverse[c]) for c in start.candidate_idx]
    if len(set(members)) != k:
        raise ValidationError("initial endmembers are not pairwise distinct")
    cand_of = {u: int(c) for u, c in zip(members, start.candidate_idx)}
    l2, ps = scorer(np.array(members))
    history = [l2]
    swaps = []
    passes = 0
    while passes < max_passes:
        passes += 1
        swapped = False
        seen = set()   # distinct rows evaluated since the last swap
        for c in range(m):
            uc = int(inverse[c])
            if uc in seen or uc in members:
                continue
            seen.add(uc)

            def trial(j, uc=uc):
                t = list(members)
                t[j] = uc
                return scorer(np.array(t))

            results = map_ordered(trial, range(k), threads)
            better = [(ps_j, -j, l2_j) for j, (l2_j, ps_j) in enumerate(results) if l2_j < l2]
            if not better:
                continue
            ps, neg_j, l2 = max(better)
            j = -neg_j
            del cand_of[members[j]]
            members[j] = uc
            cand_of[uc] = c
            history.append(l2)
            swaps.append((c, j, l2, ps))
            swapped = True
            seen = {uc}
        if not swapped:
            break
    else:
        log.warning("extract stopped after max_passes=%d with swaps still occurring", max_passes)
    idx = np.array([cand_of[u] for u in members])
    return EndmemberSet(
        spectra[idx].copy(), idx, None if source is None else source[idx].copy(),
        p_l2=l2, p_s=ps, history=history, swaps=swaps, passes=passes,
    )


def reconstruct(z, endmembers, pmap: Optional[PixelIndexMap] = None, threads=None,
                ids=None):
    """Nonnegative abundances of every pixel on the endmember spectra.

    Returns an :class:`AbundanceMap`; with ``pmap`` also a ``(k, nx, ny)``
    stack of abundance images.
    """
    z = np.asarray(z, dtype=np.float64)
    e = endmembers.spectra if isinstance(endmembers, EndmemberSet) else np.asarray(
        endmembers, dtype=np.float64)
    if z.ndim != 2 or e.ndim != 2 or z.shape[1] != e.shape[1]:
        raise ValidationError("data and endmembers must be 2-D with matching channel counts")
    n, k = z.shape[0], e.shape[0]
    if pmap is not None and len(pmap) != n:
        raise ValidationError(f"pixel map has {len(pmap)} entries for {n} rows")
    # fixed-size chunks: the split never depends on the thread count
    chunks = [slice(a, min(a + RECONSTRUCT_CHUNK, n)) for a in range(0, n, RECONSTRUCT_CHUNK)]
    parts = map_ordered(lambda s: nnls_batch(e.T, z[s].T).T, chunks, threads)
    weights = np.vstack(parts) if parts else np.zeros((0, k))
    ids = tuple(f"E{j + 1}" for j in range(k)) if ids is None else tuple(ids)
    amap = AbundanceMap(weights, ids)
    if pmap is None:
        return amap
    images = np.stack([refold(pmap, weights[:, j]) for j in range(k)])
    return amap, images
