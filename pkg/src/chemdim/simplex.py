"""Simplex volume maximization and candidate endmember harvesting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import map_ordered
from .core import ValidationError
from .numerics import svd_reduce, thin_svd

# relative volume gain a substitution must exceed to be accepted; keeps
# roundoff from cycling between equal-volume simplices
VOLUME_RTOL = 1e-12


def augment(vertices) -> np.ndarray:
    """Stack a row of ones on top of ``(i-1, i)`` vertex columns."""
    v = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    return np.vstack([np.ones((1, v.shape[1])), v])


def simplex_volume(e) -> float:
    """Volume ``|det(E)| / (i-1)!`` of a simplex given its augmented ``i x i`` matrix."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 2:
        raise ValidationError("augmented simplex matrix must be square with i >= 2")
    i = e.shape[0]
    return abs(float(np.linalg.det(e))) / math.factorial(i - 1)


def _ratios(e, aug_scores):
    """Volume ratios for every (slot, row) substitution.

    By Cramer's rule, replacing column ``j`` of ``E`` with ``y`` scales the
    determinant by ``(E^-1 y)_j``.
    """
    return np.abs(np.linalg.solve(e, aug_scores))


def nfindr_pass(scores, i: int, seed=0, max_sweeps: int = 5, init=None):
    """One N-FINDR style maximization with ``i`` vertices.

    Parameters
    ----------
    scores : (n, i-1) array
        Reduced coordinates of every sample.
    i : int
        Number of vertices.
    seed : int
        Seed for the random initial vertex draw (without replacement).
    max_sweeps : int
        Cap on full sweeps over the samples.
    init : sequence of int, optional
        Explicit initial vertex rows (overrides the random draw).

    Returns
    -------
    indices : ndarray of int
        Row index of each vertex slot.
    volume : float
        Final simplex volume.

    Rows are visited in order; each row is tried in every slot and the
    substitution with the largest gain is kept when it strictly increases the
    volume. Sweeps repeat until one makes no change or ``max_sweeps`` is hit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    n, d = scores.shape
    if i < 2:
        raise ValidationError("need at least 2 vertices")
    if d != i - 1:
        raise ValidationError(f"scores have {d} columns, expected {i - 1}")
    if n < i:
        raise ValidationError(f"need at least {i} samples for {i} vertices, got {n}")
    if init is None:
        idx = np.random.default_rng(seed).choice(n, size=i, replace=False)
    else:
        idx = np.asarray(init, dtype=np.int64).copy()
        if idx.size != i:
            raise ValidationError("init must name exactly i rows")
    aug = np.vstack([np.ones((1, n)), scores.T])  # (i, n)
    fact = math.factorial(i - 1)

    def volume(ix):
        return abs(float(np.linalg.det(aug[:, ix]))) / fact

    vol = volume(idx)
    for _ in range(max_sweeps):
        changed = False
        start = 0
        while start < n:
            e = aug[:, idx]
            if vol > 0:
                try:
                    ratio = _ratios(e, aug[:, start:])
                except np.linalg.LinAlgError:
                    ratio = None
            else:
                ratio = None
            if ratio is None:
                # degenerate simplex: evaluate volumes directly
                ratio = _direct_volumes(aug, idx, start, fact)
                threshold = vol * (1 + VOLUME_RTOL) if vol > 0 else 0.0
                better = ratio > threshold
            else:
                better = ratio > 1 + VOLUME_RTOL
            hits = np.flatnonzero(better.any(axis=0))
            if hits.size == 0:
                break
            col = hits[0]
            row = start + col
            slot = int(np.argmax(ratio[:, col]))
            idx[slot] = row
            vol = volume(idx)
            changed = True
            start = row + 1
        if not changed:
            break
    return idx, vol


def _direct_volumes(aug, idx, start, fact):
    n = aug.shape[1]
    i = idx.size
    out = np.empty((i, n - start))
    for slot in range(i):
        mats = np.repeat(aug[:, idx][None], n - start, axis=0)
        mats[:, :, slot] = aug[:, start:].T
        out[slot] = np.abs(np.linalg.det(mats)) / fact
    return out


@dataclass
class CandidateMatrix:
    """Candidate endmember spectra with their provenance.

    ``level[r]`` is the vertex count ``i`` of the maximization that found row
    ``r``, ``slot[r]`` its vertex slot and ``source[r]`` its row in ``Z``.
    """

    spectra: np.ndarray
    level: np.ndarray
    slot: np.ndarray
    source: np.ndarray
    volumes: dict

    def __len__(self) -> int:
        return int(self.spectra.shape[0])

    @property
    def shape(self):
        return self.spectra.shape


def candidate_count(g: int) -> int:
    """Rows harvested for vertex counts ``2..g``: ``g(g+1)/2 - 1``."""
    return g * (g + 1) // 2 - 1


def build_candidates(z, g: int = 20, seed=0, max_sweeps: int = 5, threads=None, svd=None,
                     center: bool = True) -> CandidateMatrix:
    """Harvest simplex vertices for ``i = 2..g`` into a candidate matrix.

    For each ``i`` the data are reduced to ``i - 1`` SVD scores and one
    maximization pass is run with seed ``seed ^ i``. The winning rows of ``z``
    (unreduced) are appended in ascending ``i``.

    With ``center`` (default) the scores come from the column-centered
    matrix, so the ``i - 1`` components span the affine hull of the data
    rather than spending one on the mean spectrum. ``svd`` may carry a
    precomputed ``thin_svd`` of the matrix actually reduced.
    """
    z = np.asarray(z, dtype=np.float64)
    n, p = z.shape
    if g < 2:
        raise ValidationError("g must be >= 2")
    if n < g:
        raise ValidationError(f"need at least g={g} samples, got {n}")
    if g - 1 > p:
        raise ValidationError(f"g={g} needs at least {g - 1} channels")
    zr = z - z.mean(axis=0) if center else z
    svd = thin_svd(zr) if svd is None else svd

    def run(i):
        return nfindr_pass(svd_reduce(zr, i - 1, svd=svd), i, seed=int(seed) ^ i, max_sweeps=max_sweeps)

    levels = list(range(2, g + 1))
    results = map_ordered(run, levels, threads)
    src = np.concatenate([r[0] for r in results])
    return CandidateMatrix(
        spectra=z[src].copy(),
        level=np.concatenate([np.full(i, i) for i in levels]),
        slot=np.concatenate([np.arange(i) for i in levels]),
        source=src,
        volumes={i: r[1] for i, r in zip(levels, results)},
    )
