"""Benchmark runner: estimated-vs-true dimensionality over synthetic grids."""
from __future__ import annotations

import csv
import io as _io
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._parallel import map_ordered
from .baselines import METHODS, run_baselines
from .core import ChemdimError, ValidationError
from .estimator import DEFAULT_G, estimate
from .io import atomic_path, write_json
from .numerics import thin_svd
from .synth import SyntheticSpec, make_dataset

log = logging.getLogger(__name__)

ALL_METHODS = ("cd",) + METHODS


def expand_grid(entries) -> list:
    """Specs from a list of dicts; list-valued fields expand as a product."""
    if isinstance(entries, dict):
        entries = entries.get("grid", entries.get("specs", [entries]))
    specs = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise ValidationError("grid entries must be objects")
        keys = list(entry)
        values = [v if isinstance(v, list) else [v] for v in entry.values()]
        for combo in itertools.product(*values):
            try:
                specs.append(SyntheticSpec(**dict(zip(keys, combo))))
            except TypeError as exc:
                raise ValidationError(f"bad grid entry {entry}: {exc}") from None
    if not specs:
        raise ValidationError("empty benchmark grid")
    return specs


def repeat_seed(seed, spec: SyntheticSpec, r: int) -> int:
    """Algorithm seed of repeat ``r`` on ``spec``."""
    snr_key = int(round(spec.snr * 1000)) if np.isfinite(spec.snr) else 0
    ss = np.random.SeedSequence([int(seed), spec.k, spec.n, spec.p, snr_key, spec.seed, int(r)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class BenchmarkResult:
    specs: list
    repeats: int
    methods: tuple
    # records: (spec index, repeat or None, method, estimate or None, error or None)
    records: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def estimates(self, method: str, spec_index: Optional[int] = None) -> list:
        return [r[3] for r in self.records
                if r[2] == method and (spec_index is None or r[0] == spec_index)]

    def confusion(self, method: str):
        """``(true_values, estimated_labels, counts)``; undefined estimates count as ``--``."""
        pairs = [(self.specs[i].k, "--" if est is None else est)
                 for i, _, m, est, _ in self.records if m == method]
        truths = sorted({t for t, _ in pairs})
        ests = sorted({e for _, e in pairs if e != "--"})
        if any(e == "--" for _, e in pairs):
            ests.append("--")
        counts = Counter(pairs)
        table = np.array([[counts[(t, e)] for e in ests] for t in truths], dtype=int)
        return truths, ests, table

    def confusion_csv(self, method: str) -> str:
        truths, ests, table = self.confusion(method)
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\estimated"] + [str(e) for e in ests])
        for t, row in zip(truths, table):
            w.writerow([t] + row.tolist())
        return buf.getvalue()

    def _cell(self, method, i):
        ests = self.estimates(method, i)
        if not ests:
            return ""
        counts = Counter("--" if e is None else e for e in ests)
        best, c = max(counts.items(), key=lambda kv: (kv[1], -(kv[0] if kv[0] != "--" else 1e9)))
        if c == len(ests):
            return str(best)
        return f"{best} ({round(100 * c / len(ests))}%)"

    def comparison_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n", "p", "snr", "seed"] + list(self.methods))
        for i, s in enumerate(self.specs):
            w.writerow([s.k, s.n, s.p, s.snr, s.seed] + [self._cell(m, i) for m in self.methods])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "command": "bench",
            "repeats": self.repeats,
            "methods": list(self.methods),
            "grid": [s.to_dict() for s in self.specs],
            "params": self.params,
            "algorithm_seeds": [[repeat_seed(self.params.get("seed", 0), s, r)
                                 for r in range(self.repeats)] for s in self.specs],
            "failures": [{"spec": i, "repeat": r, "method": m, "error": err}
                         for i, r, m, _, err in self.records if err],
            "version": __version__,
        }

    def write(self, out) -> list:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for m in self.methods:
            path = out / f"confusion_{m}.csv"
            with atomic_path(path) as tmp:
                tmp.write_text(self.confusion_csv(m), encoding="utf-8")
            written.append(path)
        path = out / "comparison_table.csv"
        with atomic_path(path) as tmp:
            tmp.write_text(self.comparison_csv(), encoding="utf-8")
        written.append(path)
        path = out / "run_manifest.json"
        write_json(path, self.manifest())
        written.append(path)
        return written


def run_benchmark(grid, repeats: int = 1, methods=ALL_METHODS, seed: int = 0,
                  g: int = DEFAULT_G, pf: float = 1e-5, threads=None,
                  progress=None) -> BenchmarkResult:
    """Run the estimators over every spec in ``grid``.

    Data are generated once per spec; the ``repeats`` re-run the stochastic
    estimator with independent derived seeds. Deterministic baselines run once
    per spec. A failing cell is recorded and the run continues.
    """
    specs = [s if isinstance(s, SyntheticSpec) else SyntheticSpec(**s) for s in grid]
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    methods = tuple(methods)
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValidationError(f"unknown method(s) {unknown}; choose from {list(ALL_METHODS)}")
    result = BenchmarkResult(specs, repeats, methods,
                             params={"seed": int(seed), "g": g, "pf": pf})
    base = [m for m in methods if m != "cd"]
    for i, spec in enumerate(specs):
        ds = make_dataset(spec)
        if "cd" in methods:
            svd = thin_svd(ds.z - ds.z.mean(axis=0))

            def cell(r, ds=ds, svd=svd, spec=spec):
                try:
                    rep = estimate(ds.z, g=g, seed=repeat_seed(seed, spec, r), axis=ds.axis, svd=svd)
                    return rep.k_cd, None
                except (ChemdimError, np.linalg.LinAlgError) as exc:
                    return None, f"{type(exc).__name__}: {exc}"

            for r, (est, err) in enumerate(map_ordered(cell, range(repeats), threads)):
                if err:
                    log.warning("cd failed on spec %d repeat %d: %s", i, r, err)
                result.records.append((i, r, "cd", est, err))
        if base:
            try:
                for b in run_baselines(ds.z, base, pf=pf):
                    result.records.append((i, None, b.method, b.dimension, None))
            except (ChemdimError, np.linalg.LinAlgError) as exc:
                for m in base:
                    result.records.append((i, None, m, None, f"{type(exc).__name__}: {exc}"))
        if progress:
            progress(i, spec)
    return result
