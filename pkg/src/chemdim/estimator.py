"""Dimensionality estimation from semi-NMF model curves.

Semi-NMF models with ``u = 1 .. g`` sources are fitted to the candidate
matrix. The model with the largest error reduction is accepted when it also
raises the residual entropy; otherwise the nearest model (either side) that
does is chosen.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from ._parallel import map_ordered
from .core import NumericalError, ValidationError, as_axis, normalize_rows
from .metrics import check_monotone, error_reduction, normalize_sse, row_entropies
from .numerics import semi_nmf
from .simplex import CandidateMatrix, build_candidates

log = logging.getLogger(__name__)

DEFAULT_G = 20


@dataclass
class NmfParams:
    tol: float = 1e-6
    max_iter: int = 200


@dataclass
class MetricCurves:
    """Per-model metric curves, indexed by ``u = 1 .. g`` (``rho`` by ``u = 2 .. g-1``)."""

    s: np.ndarray
    eps: np.ndarray
    rho: np.ndarray
    S: np.ndarray
    sse_rises: list = field(default_factory=list)

    @property
    def g(self) -> int:
        return int(self.s.size)

    def entropy_gain(self, u: int) -> float:
        """``S_u - S_{u-1}``."""
        return float(self.S[u - 1] - self.S[u - 2])

    def rho_at(self, u: int) -> float:
        return float(self.rho[u - 2])

    def to_dict(self) -> dict:
        return {
            "u": list(range(1, self.g + 1)),
            "sse": self.s, "eps": self.eps,
            "rho_u": list(range(2, self.g)), "rho": self.rho,
            "entropy": self.S,
        }


def model_seed(seed, u: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(u)])


def curves_from_residuals(residual_sse, entropies) -> MetricCurves:
    s = np.asarray(residual_sse, dtype=np.float64)
    eps = normalize_sse(s)
    return MetricCurves(s, eps, error_reduction(eps), np.asarray(entropies, dtype=np.float64),
                        check_monotone(s))


def fit_models(v, g: int = DEFAULT_G, seed=0, nmf: Optional[NmfParams] = None, axis=None,
               threads=None):
    """Fit semi-NMF models for ``u = 1 .. g`` to the candidate spectra.

    ``v`` holds candidates as rows; the factorization is of ``v.T``. Returns
    ``(models, curves)``.
    """
    spectra = v.spectra if isinstance(v, CandidateMatrix) else np.asarray(v, dtype=np.float64)
    m, p = spectra.shape
    if g < 3:
        raise ValidationError("g must be >= 3")
    if m < g:
        raise ValidationError(f"candidate matrix has {m} rows, need at least g={g}")
    nmf = nmf or NmfParams()
    nu = as_axis(axis, p).values
    x = spectra.T

    def run(u):
        model = semi_nmf(x, u, seed=model_seed(seed, u), tol=nmf.tol, max_iter=nmf.max_iter)
        r = spectra - model.reconstruction.T
        return model, float(np.sum(r * r)), float(row_entropies(r, nu).sum())

    try:
        results = map_ordered(run, range(1, g + 1), threads)
    except NumericalError as exc:
        raise NumericalError(f"model fitting aborted: {exc}") from None
    models = [r[0] for r in results]
    curves = curves_from_residuals([r[1] for r in results], [r[2] for r in results])
    return models, curves


def select_dimensionality(curves: MetricCurves):
    """Apply the error-reduction / entropy-increase rule.

    Returns ``(z, k_cd, trace)`` where ``trace`` lists ``(u, entropy_gain,
    accepted)`` for every model examined, in order.
    """
    g = curves.g
    if g < 3:
        raise ValidationError("need curves for at least 3 models")
    rho = np.where(np.isnan(curves.rho), -np.inf, curves.rho)
    z = int(np.argmax(rho)) + 2  # first maximum: ties go to the smallest u
    trace = []
    gain_z = curves.entropy_gain(z)
    if gain_z > 0:
        trace.append((z, gain_z, True))
        return z, z, trace
    trace.append((z, gain_z, False))
    i = 1
    while True:
        sides = [u for u in (z - i, z + i) if 2 <= u <= g - 1]
        if not sides:
            break
        gains = {u: curves.entropy_gain(u) for u in sides}
        rising = [u for u in sides if gains[u] > 0]
        if rising:
            # both sides rising: the larger gain wins, lower u on an exact tie
            best = max(rising, key=lambda u: (gains[u], -u))
            for u in sides:
                trace.append((u, gains[u], u == best))
            return z, best, trace
        for u in sides:
            trace.append((u, gains[u], False))
        i += 1
    log.warning("no entropy increase between u=2 and u=%d; falling back to z=%d", g - 1, z)
    return z, z, trace


@dataclass
class DimensionalityReport:
    g: int
    curves: MetricCurves
    z: int
    k_cd: int
    trace: list
    seed: int
    normalized: bool = False
    candidates: Optional[CandidateMatrix] = None
    timings: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "g": self.g,
            "z": self.z,
            "k_cd": self.k_cd,
            "seed": self.seed,
            "normalized": self.normalized,
            "curves": self.curves.to_dict(),
            "sse_increases_at": self.curves.sse_rises,
            "trace": [{"u": u, "entropy_gain": dS, "accepted": ok} for u, dS, ok in self.trace],
            "params": self.params,
            "timings": self.timings,
            "version": __version__,
        }
        if self.candidates is not None:
            out["candidates"] = {
                "m": len(self.candidates),
                "source_rows": self.candidates.source,
                "level": self.candidates.level,
                "slot": self.candidates.slot,
            }
        return out


def estimate(z, g: int = DEFAULT_G, seed=0, axis=None, normalize: bool = False,
             nmf: Optional[NmfParams] = None, max_sweeps: int = 5, threads=None,
             svd=None, center: bool = True) -> DimensionalityReport:
    """Estimate the number of spectrally separable sources in ``z``.

    Runs candidate harvesting, semi-NMF model fitting and selection. With
    ``normalize`` every spectrum is scaled to unit length first. ``center``
    is passed to :func:`build_candidates`; ``svd`` may carry a cached
    ``thin_svd`` of the matrix it reduces.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValidationError("data must be a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(z)):
        raise ValidationError("data contains non-finite values")
    if g < 3:
        raise ValidationError("g must be >= 3")
    nmf = nmf or NmfParams()
    axis = as_axis(axis, z.shape[1])
    if normalize:
        z = normalize_rows(z)
    t0 = time.perf_counter()
    cand = build_candidates(z, g, seed=seed, max_sweeps=max_sweeps, threads=threads, svd=svd,
                            center=center)
    t1 = time.perf_counter()
    _, curves = fit_models(cand, g, seed=seed, nmf=nmf, axis=axis, threads=threads)
    t2 = time.perf_counter()
    zsel, k_cd, trace = select_dimensionality(curves)
    return DimensionalityReport(
        g=g, curves=curves, z=zsel, k_cd=k_cd, trace=trace, seed=int(seed),
        normalized=normalize, candidates=cand,
        timings={"candidates_s": t1 - t0, "models_s": t2 - t1},
        params={"max_sweeps": max_sweeps, "center": center, "nmf_tol": nmf.tol, "nmf_max_iter": nmf.max_iter},
    )
