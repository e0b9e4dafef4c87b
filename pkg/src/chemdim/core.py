"""Data containers and datacube unfolding.

Array conventions
-----------------
- Cube ``(nx, ny, nv)``: spatial extents first, channels last.
- Data matrix ``(n, p)``: one spectrum per row, ``n = nx * ny`` when unfolded.
- Unfolding is row-major over ``(x, y)``: row ``r`` holds pixel
  ``(r // ny, r % ny)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class ChemdimError(Exception):
    """Base class for package errors."""


class ValidationError(ChemdimError, ValueError):
    """Invalid argument or data."""


class FormatError(ChemdimError, ValueError):
    """Malformed file content."""


class NumericalError(ChemdimError, RuntimeError):
    """A numerical kernel failed to produce a usable result."""


@dataclass(frozen=True)
class SpectralAxis:
    """Channel positions (wavenumbers or plain channel indices)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 2:
            raise ValidationError("spectral axis must be 1-D with at least 2 channels")
        if not np.all(np.isfinite(v)):
            raise ValidationError("spectral axis contains non-finite values")
        if not np.all(np.diff(v) > 0):
            raise ValidationError("spectral axis must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    @classmethod
    def index(cls, p: int) -> "SpectralAxis":
        return cls(np.arange(p, dtype=np.float64))

    @classmethod
    def linspace(cls, start: float, stop: float, p: int) -> "SpectralAxis":
        return cls(np.linspace(start, stop, p))


def as_axis(axis, p: int) -> SpectralAxis:
    """Coerce ``axis`` (None, array-like or SpectralAxis) to a checked axis of length ``p``."""
    if axis is None:
        return SpectralAxis.index(p)
    if not isinstance(axis, SpectralAxis):
        axis = SpectralAxis(np.asarray(axis, dtype=np.float64))
    if len(axis) != p:
        raise ValidationError(f"axis has {len(axis)} channels, data has {p}")
    return axis


@dataclass(frozen=True)
class DataMatrix:
    """Samples x channels intensity matrix."""

    values: np.ndarray
    axis: SpectralAxis

    def __post_init__(self):
        z = np.asarray(self.values, dtype=np.float64)
        if z.ndim != 2:
            raise ValidationError("data matrix must be 2-D")
        if z.shape[0] < 2:
            raise ValidationError("data matrix needs at least 2 rows")
        if not np.all(np.isfinite(z)):
            raise ValidationError("data matrix contains non-finite values")
        object.__setattr__(self, "values", z)
        object.__setattr__(self, "axis", as_axis(self.axis, z.shape[1]))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class HyperCube:
    """Hyperspectral datacube of shape ``(nx, ny, nv)``."""

    values: np.ndarray
    axis: Optional[SpectralAxis] = None

    def __post_init__(self):
        c = np.asarray(self.values, dtype=np.float64)
        if c.ndim != 3:
            raise ValidationError("cube must have shape (nx, ny, nv)")
        if c.shape[0] * c.shape[1] < 1 or c.shape[2] < 1:
            raise ValidationError("cube has an empty dimension")
        if not np.all(np.isfinite(c)):
            raise ValidationError("cube contains non-finite values")
        object.__setattr__(self, "values", c)
        if c.shape[2] >= 2:
            object.__setattr__(self, "axis", as_axis(self.axis, c.shape[2]))

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def nv(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PixelIndexMap:
    """Origin ``(x, y)`` of every unfolded row."""

    coords: np.ndarray  # (n, 2) int
    nx: int
    ny: int

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValidationError("pixel map coordinates must have shape (n, 2)")
        if c.shape[0] != self.nx * self.ny:
            raise ValidationError("pixel map length must equal nx * ny")
        if c.size and (c.min() < 0 or c[:, 0].max() >= self.nx or c[:, 1].max() >= self.ny):
            raise ValidationError("pixel map coordinate outside the grid")
        flat = c[:, 0] * self.ny + c[:, 1]
        if np.unique(flat).size != flat.size:
            raise ValidationError("pixel map is not bijective")
        object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return int(self.coords.shape[0])


@dataclass(frozen=True)
class AbundanceMap:
    """Per-pixel nonnegative endmember weights (no sum-to-one constraint)."""

    weights: np.ndarray  # (n, k)
    endmember_ids: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != len(self.endmember_ids):
            raise ValidationError("weights must be (n, k) with k endmember ids")
        if np.any(w < 0):
            raise ValidationError("abundance weights must be nonnegative")
        object.__setattr__(self, "weights", w)


def unfold(cube: HyperCube):
    """Reshape a cube into an ``(nx*ny, nv)`` data matrix plus its pixel map."""
    if not isinstance(cube, HyperCube):
        cube = HyperCube(np.asarray(cube))
    nx, ny, nv = cube.values.shape
    z = cube.values.reshape(nx * ny, nv).copy()
    xs, ys = np.divmod(np.arange(nx * ny), ny)
    pmap = PixelIndexMap(np.column_stack([xs, ys]), nx, ny)
    return z, pmap


def refold(pmap: PixelIndexMap, values, nx: Optional[int] = None, ny: Optional[int] = None) -> np.ndarray:
    """Place per-row values back on the spatial grid.

    ``values`` may be 1-D (one image) or 2-D ``(n, c)``; the result has shape
    ``(nx, ny)`` or ``(nx, ny, c)``.
    """
    nx = pmap.nx if nx is None else nx
    ny = pmap.ny if ny is None else ny
    if (nx, ny) != (pmap.nx, pmap.ny):
        raise ValidationError("grid size does not match pixel map")
    v = np.asarray(values)
    if v.shape[0] != len(pmap):
        raise ValidationError(f"got {v.shape[0]} values for {len(pmap)} pixels")
    grid = np.zeros((nx, ny) + v.shape[1:], dtype=v.dtype)
    grid[pmap.coords[:, 0], pmap.coords[:, 1]] = v
    return grid


def refold_cube(pmap: PixelIndexMap, z: np.ndarray, axis=None) -> HyperCube:
    return HyperCube(refold(pmap, z), axis)


def normalize_rows(z: np.ndarray) -> np.ndarray:
    """Scale every row to unit l2 length; all-zero rows are left as they are."""
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(norms > 0, norms, 1.0)
