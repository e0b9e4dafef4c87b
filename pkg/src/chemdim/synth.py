"""Synthetic Gaussian pseudo-spectra, convex mixtures and SNR-controlled noise."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import SpectralAxis, ValidationError, as_axis
from .metrics import row_e_rms

DEFAULT_AXIS = (900.0, 1900.0, 1001)


def default_axis(p: int = 1001) -> SpectralAxis:
    if p == DEFAULT_AXIS[2]:
        return SpectralAxis.linspace(*DEFAULT_AXIS)
    return SpectralAxis.linspace(DEFAULT_AXIS[0], DEFAULT_AXIS[1], p)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gaussian_mixture(x, heights, centers, widths) -> np.ndarray:
    """Sum of Gaussians ``a * exp(-(x - m)^2 / (2 s^2))`` evaluated on ``x``."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    a = np.asarray(heights, dtype=np.float64)[None, :]
    m = np.asarray(centers, dtype=np.float64)[None, :]
    s = np.asarray(widths, dtype=np.float64)[None, :]
    return np.sum(a * np.exp(-((x - m) ** 2) / (2 * s * s)), axis=1)


def generate_endmembers(k: int, axis=None, seed=0, f_max: int = 6, width_range=(1.0, 50.0),
                        normalize: bool = True, return_params: bool = False):
    """Random pseudo-spectra built from 1..``f_max`` Gaussian peaks each.

    Per peak: height ~ U[0, 1], center ~ U over the axis range snapped to an
    integer position, width ~ U[``width_range``]. Rows are scaled to unit
    l2 length when ``normalize`` is set.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    axis = default_axis() if axis is None else as_axis(axis, len(axis))
    nu = axis.values
    rng = _rng(seed)
    out = np.empty((k, nu.size))
    params = []
    for i in range(k):
        f = int(rng.integers(1, f_max + 1))
        a = rng.uniform(0.0, 1.0, f)
        m = np.rint(rng.uniform(nu[0], nu[-1], f))
        s = rng.uniform(width_range[0], width_range[1], f)
        out[i] = gaussian_mixture(nu, a, m, s)
        params.append({"heights": a, "centers": m, "widths": s})
    if normalize:
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        out = out / np.where(norms > 0, norms, 1.0)
    return (out, params) if return_params else out


@dataclass
class GroundTruth:
    endmembers: np.ndarray     # (k, p)
    weights: np.ndarray        # (n, k), rows on the simplex
    pure_rows: np.ndarray      # pure_rows[j] = row of endmember j in the data

    def to_dict(self) -> dict:
        return {
            "k": int(self.endmembers.shape[0]),
            "pure_rows": self.pure_rows.tolist(),
            "endmembers": self.endmembers.tolist(),
        }


def simplex_weights(n: int, k: int, seed=0) -> np.ndarray:
    """``n`` draws uniform on the probability simplex (normalized exponentials)."""
    rng = _rng(seed)
    w = rng.standard_exponential((n, k))
    return w / w.sum(axis=1, keepdims=True)


def mix_dataset(endmembers, n: int, seed=0):
    """``n - k`` convex mixtures plus the ``k`` pure spectra, shuffled.

    Returns ``(Z, GroundTruth)``.
    """
    e = np.asarray(endmembers, dtype=np.float64)
    k = e.shape[0]
    if n < k:
        raise ValidationError(f"n={n} is smaller than k={k}")
    rng = _rng(seed)
    w = np.vstack([simplex_weights(n - k, k, rng), np.eye(k)])
    order = rng.permutation(n)
    w = w[order]
    z = w @ e
    # shuffled row r holds original row order[r]; pure spectra were rows n-k..n-1
    pure_rows = np.argsort(order)[n - k + np.arange(k)]
    return z, GroundTruth(e, w, pure_rows)


def noise_sigma(z, snr: float) -> float:
    """Noise level that gives the weakest row (by RMS) the requested SNR."""
    if not snr > 0:
        raise ValidationError("snr must be positive")
    rms = row_e_rms(z)
    weakest = float(rms.min())
    if weakest == 0 and not np.any(rms > 0):
        raise ValidationError("all-zero data: SNR is undefined")
    return weakest / snr


def add_noise(z, snr: float, seed=0) -> np.ndarray:
    """Add i.i.d. Gaussian noise with ``sigma = min_row_rms / snr`` to every entry."""
    z = np.asarray(z, dtype=np.float64)
    sigma = noise_sigma(z, snr)
    if np.isinf(snr):
        return z.copy()
    return z + _rng(seed).normal(0.0, sigma, z.shape)


@dataclass(frozen=True)
class SyntheticSpec:
    k: int
    n: int = 5000
    p: int = 1001
    snr: float = 1000.0
    seed: int = 0
    normalize_endmembers: bool = True

    def __post_init__(self):
        if not 2 <= self.k <= self.n:
            raise ValidationError("need 2 <= k <= n")
        if not self.snr > 0:
            raise ValidationError("snr must be positive")
        if self.p < 3:
            raise ValidationError("p must be >= 3")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    z: np.ndarray
    clean: np.ndarray
    axis: SpectralAxis
    truth: GroundTruth
    sigma: float = field(default=0.0)


def make_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Generate endmembers, mixtures and noise for ``spec``.

    Endmembers depend only on ``(seed, k, p)``, so datasets that differ in
    ``n`` or SNR share their ground-truth spectra; mixing depends on
    ``(seed, k, p, n)`` and noise additionally on the SNR.
    """
    snr_key = int(round(spec.snr * 1000)) if np.isfinite(spec.snr) else 0
    s_end = np.random.default_rng([spec.seed, spec.k, spec.p, 1])
    s_mix = np.random.default_rng([spec.seed, spec.k, spec.p, spec.n, 2])
    s_noise = np.random.default_rng([spec.seed, spec.k, spec.p, spec.n, snr_key, 3])
    axis = default_axis(spec.p)
    e = generate_endmembers(spec.k, axis, s_end, normalize=spec.normalize_endmembers)
    clean, truth = mix_dataset(e, spec.n, s_mix)
    sigma = noise_sigma(clean, spec.snr)
    z = clean + s_noise.normal(0.0, sigma, clean.shape)
    return SyntheticDataset(spec, z, clean, axis, truth, sigma)
