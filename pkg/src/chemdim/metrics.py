"""Residual metrics used for model selection and endmember scoring."""
from __future__ import annotations

import logging

import numpy as np

from .core import ValidationError, as_axis

log = logging.getLogger(__name__)


def sse(residuals) -> float:
    """Sum of squared residual entries."""
    r = np.asarray(residuals, dtype=np.float64)
    return float(np.sum(r * r))


def normalize_sse(s) -> np.ndarray:
    """Scale the SSE curve by its maximum so it lies in ``[0, 1]``."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("SSE curve must be a non-empty vector")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValidationError("SSE values must be finite and nonnegative")
    top = s.max()
    if top == 0:
        raise ValidationError("all SSE values are zero; the curve cannot be normalized")
    return s / top


def error_reduction(eps) -> np.ndarray:
    """Ratio of successive drops in normalized SSE.

    Returns ``rho`` with ``rho[j]`` belonging to ``u = j + 2`` (so the curve
    covers ``u = 2 .. g-1``)::

        rho(u) = (eps[u-1] - eps[u]) / (eps[u] - eps[u+1])

    A rise in ``eps`` (a fit stuck in a poorer local minimum) counts as a
    zero drop, so ``rho >= 0``. A vanishing denominator yields ``+inf`` after
    a positive drop and ``0`` when both drops vanish.
    """
    e = np.asarray(eps, dtype=np.float64)
    if e.ndim != 1 or e.size < 3:
        raise ValidationError("need at least 3 points to compute an error reduction")
    drop = np.maximum(e[:-1] - e[1:], 0.0)
    num, den = drop[:-1], drop[1:]
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def derivative_distribution(r, nu) -> np.ndarray:
    """Normalized absolute finite-difference slopes of a residual spectrum.

    Returns the ``p - 1`` weights ``b``. An all-constant residual gives all
    zeros.
    """
    r = np.asarray(r, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    slope = np.abs(np.diff(r, axis=-1) / np.diff(nu))
    total = slope.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, slope / np.where(total > 0, total, 1.0), 0.0)


def _entropy_rows(b):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def residual_entropy(r, nu=None) -> float:
    """Shannon entropy of a residual's normalized slope distribution.

    Bounded by ``ln(p - 1)``; reached when every slope has the same magnitude.
    A constant residual carries no slope information and scores 0.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.size < 3:
        raise ValidationError("residual must be a vector with at least 3 channels")
    nu = as_axis(nu, r.size).values
    return float(_entropy_rows(derivative_distribution(r, nu)))


def row_entropies(residuals, nu=None) -> np.ndarray:
    r = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    if r.shape[1] < 3:
        raise ValidationError("residuals need at least 3 channels")
    nu = as_axis(nu, r.shape[1]).values
    return _entropy_rows(derivative_distribution(r, nu))


def total_entropy(residuals, nu=None) -> float:
    """Sum of per-row residual entropies."""
    return float(row_entropies(residuals, nu).sum())


def floor_residuals(r, ref, rtol: float = 1e-10) -> np.ndarray:
    """Zero residual rows whose norm is below ``rtol`` times the fitted row's norm.

    A row reproduced to roundoff leaves a residual of rounding noise, whose
    slope distribution looks maximally random. Flooring it makes such a row
    score like an exact fit (entropy 0).
    """
    r = np.array(r, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    small = np.linalg.norm(r, axis=-1) <= rtol * np.linalg.norm(ref, axis=-1)
    r[small] = 0.0
    return r


def e_rms(spectrum) -> float:
    """Root-mean-square intensity of a spectrum."""
    x = np.asarray(spectrum, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def row_e_rms(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.sqrt(np.mean(z * z, axis=1))


def check_monotone(s, label="SSE") -> list:
    """Return the ``u`` values (1-based) where the curve rises, logging each."""
    s = np.asarray(s, dtype=np.float64)
    rises = [int(j + 2) for j in np.flatnonzero(np.diff(s) > 0)]
    for u in rises:
        log.warning("%s increases from u=%d to u=%d", label, u - 1, u)
    return rises
