"""Reference dimensionality estimators and K-means++ clustering.

Formulas
--------
Eigenvalues ``l_1 >= ... >= l_p`` are taken from the p x p second-moment
matrix ``Z^T Z / n`` of the raw (uncentered) data unless noted, so a mixture of
``k`` sources shows ``k`` signal eigenvalues.

HFC
    With ``R = Z^T Z / n`` (correlation) and ``K`` the sample covariance,
    component ``l`` counts as signal when ``lr_l - lk_l > tau_l`` where
    ``tau_l = sqrt(2 (lr_l^2 + lk_l^2) / n) * Phi^-1(1 - P_F)``.
AIC / MDL
    For ``q = 0 .. p-1`` let ``G`` and ``A`` be the geometric and arithmetic
    means of ``l_{q+1} .. l_p``::

        AIC(q) = -2 n (p - q) ln(G / A) + 2 q (2p - q)
        MDL(q) = -n (p - q) ln(G / A) + q (2p - q) ln(n) / 2

FIF
    ``RE(q) = sqrt(sum_{j>q} l_j / (n (p - q)))`` on the eigenvalues of
    ``Z^T Z``, ``IND(q) = RE(q) / (p - q)^2`` minimized over ``q = 1 .. p-1``.
Explained variance
    Smallest ``q`` whose leading singular values of the column-centered data
    explain at least the requested fraction of the total variance.

AIC, MDL and FIF are flagged degenerate when ``n <= p``; their estimate is then
reported as undefined (the raw argmin is kept for inspection).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .core import ValidationError, normalize_rows

log = logging.getLogger(__name__)

METHODS = ("hfc", "aic", "mdl", "fif", "lambda95", "lambda99")
DEFAULT_PF = 1e-5


@dataclass
class BaselineResult:
    method: str
    dimension: Optional[int]
    params: dict = field(default_factory=dict)
    degenerate: bool = False
    raw: Optional[int] = None

    @property
    def cell(self) -> str:
        """Table cell text; ``--`` when the method cannot give an estimate."""
        return "--" if self.dimension is None else str(self.dimension)

    def to_dict(self) -> dict:
        return {"method": self.method, "dimension": self.dimension, "degenerate": self.degenerate,
                "raw": self.raw, "params": self.params}


def _check(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise ValidationError("data must be a 2-D matrix with at least 2 rows and 2 columns")
    if not np.all(np.isfinite(z)):
        raise ValidationError("data contains non-finite values")
    return z


def _eigvals_desc(m):
    lam = np.linalg.eigvalsh(m)[::-1]
    # eigenvalues below roundoff are exact zeros of a rank-deficient matrix
    floor = lam[0] * m.shape[0] * np.finfo(float).eps if lam[0] > 0 else 0.0
    return np.where(lam > floor, lam, 0.0)


def second_moment_eigvals(z) -> np.ndarray:
    z = _check(z)
    return _eigvals_desc(z.T @ z / z.shape[0])


def hfc(z, pf: float = DEFAULT_PF) -> BaselineResult:
    """Eigenvalue-difference count at false-alarm probability ``pf``."""
    z = _check(z)
    if not 0 < pf < 1:
        raise ValidationError("false-alarm probability must lie in (0, 1)")
    n = z.shape[0]
    lr = _eigvals_desc(z.T @ z / n)
    zc = z - z.mean(axis=0)
    lk = _eigvals_desc(zc.T @ zc / (n - 1))
    tau = np.sqrt(2.0 * (lr ** 2 + lk ** 2) / n) * norm.isf(pf)
    d = int(np.sum(lr - lk > tau))
    return BaselineResult("hfc", d, {"pf": pf})


def _trailing_log_ratio(lam):
    """``ln(G/A)`` of ``lam[q:]`` for every ``q`` (non-finite where undefined)."""
    p = lam.size
    cnt = p - np.arange(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(lam)
        mean_log = np.cumsum(logs[::-1])[::-1] / cnt
        mean = np.cumsum(lam[::-1])[::-1] / cnt
        return mean_log - np.log(mean)


def _argmin_finite(values):
    finite = np.isfinite(values)
    if not finite.any():
        return None
    return int(np.argmin(np.where(finite, values, np.inf)))


def _information_criterion(z, kind):
    z = _check(z)
    n, p = z.shape
    lam = second_moment_eigvals(z)
    q = np.arange(p)
    ratio = _trailing_log_ratio(lam)
    if kind == "aic":
        crit = -2.0 * n * (p - q) * ratio + 2.0 * q * (2 * p - q)
    else:
        crit = -1.0 * n * (p - q) * ratio + 0.5 * q * (2 * p - q) * np.log(n)
    raw = _argmin_finite(crit)
    degenerate = n <= p
    return BaselineResult(kind, None if degenerate else raw, {}, degenerate, raw)


def aic(z) -> BaselineResult:
    return _information_criterion(z, "aic")


def mdl(z) -> BaselineResult:
    return _information_criterion(z, "mdl")


def fif(z) -> BaselineResult:
    """Malinowski's factor indicator function minimum."""
    z = _check(z)
    n, p = z.shape
    lam = _eigvals_desc(z.T @ z)
    q = np.arange(1, p)
    tail = np.cumsum(lam[::-1])[::-1][1:]          # sum_{j>q} l_j for q = 1..p-1
    re = np.sqrt(tail / (n * (p - q)))
    ind = re / (p - q) ** 2
    j = _argmin_finite(ind)
    raw = None if j is None else int(q[j])
    degenerate = n <= p
    return BaselineResult("fif", None if degenerate else raw, {}, degenerate, raw)


def explained_variance(z) -> np.ndarray:
    """Cumulative explained-variance fractions of the column-centered data."""
    z = _check(z)
    s = np.linalg.svd(z - z.mean(axis=0), compute_uv=False)
    var = s * s
    total = var.sum()
    if total == 0:
        raise ValidationError("data have zero variance")
    return np.cumsum(var) / total


def variance_threshold(z, fraction: float) -> BaselineResult:
    """Smallest number of principal components explaining ``fraction`` of the variance."""
    if not 0 < fraction < 1:
        raise ValidationError("fraction must lie in (0, 1)")
    cum = explained_variance(z)
    # tiny slack so a fraction reached exactly is not lost to rounding
    q = int(np.searchsorted(cum, fraction - 1e-12) + 1)
    return BaselineResult(f"lambda{round(fraction * 100)}", min(q, cum.size), {"fraction": fraction})


def run_baselines(z, methods=METHODS, pf: float = DEFAULT_PF, normalize: bool = False) -> list:
    """Run the named estimators; returns one :class:`BaselineResult` per method."""
    z = _check(z)
    if normalize:
        z = normalize_rows(z)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValidationError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    out = []
    for m in methods:
        if m == "hfc":
            out.append(hfc(z, pf))
        elif m == "aic":
            out.append(aic(z))
        elif m == "mdl":
            out.append(mdl(z))
        elif m == "fif":
            out.append(fif(z))
        else:
            out.append(variance_threshold(z, int(m[len("lambda"):]) / 100))
    return out


# ---------------------------------------------------------------- K-means++

@dataclass
class KMeansResult:
    centroids: np.ndarray   # (k, p)
    labels: np.ndarray      # (n,)
    inertia: float
    history: list           # inertia after every assignment step
    iterations: int
    converged: bool


def _sq_dist(z, c, z_sq=None):
    z_sq = np.einsum("ij,ij->i", z, z) if z_sq is None else z_sq
    d = z_sq[:, None] - 2.0 * z @ c.T + np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(d, 0.0)


def kmeanspp_init(z, k: int, rng) -> np.ndarray:
    """K-means++ seeding: each next center drawn with probability ~ squared distance."""
    n = z.shape[0]
    idx = [int(rng.integers(n))]
    d = _sq_dist(z, z[idx])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d / total))
        else:
            # every point coincides with a center already
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d = np.minimum(d, _sq_dist(z, z[nxt:nxt + 1])[:, 0])
    return z[idx].copy()


def kmeanspp(z, k: int, seed=0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's K-means from K-means++ seeds.

    An empty cluster is reseeded with the point farthest from its centroid.
    Iteration stops when the assignments no longer change or after
    ``max_iter`` assignment steps.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2 or not np.all(np.isfinite(z)):
        raise ValidationError("data must be a finite 2-D matrix")
    n = z.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, n={n}]")
    rng = np.random.default_rng(seed)
    c = kmeanspp_init(z, k, rng)
    z_sq = np.einsum("ij,ij->i", z, z)
    rows = np.arange(n)
    labels = None
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dist(z, c, z_sq)
        new = np.argmin(d, axis=1)
        dist = d[rows, new]
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(dist))
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
            dist[far] = 0.0
        history.append(float(dist.sum()))
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        sums = np.zeros_like(c)
        np.add.at(sums, labels, z)
        c = sums / counts[:, None]
    inertia = float(_sq_dist(z, c, z_sq)[rows, labels].sum())
    return KMeansResult(c, labels, inertia, history, it, converged)
