"""File formats: CSV matrices, HSDC binary cubes, JSON reports and PGM images.

CSV
    Comma separated, ``.`` decimal, one sample per row. An optional first
    line starting with ``#`` carries the spectral axis (comma separated).
    Values are written with 17 significant digits so every finite float64
    survives a round trip bit-exactly.
HSDC
    ``b"HSDC"`` magic, then little-endian ``u32`` nx, ny, nv (16 byte header),
    then ``nx*ny*nv`` little-endian float64 values with the channel index
    varying fastest, then y, then x.
PGM
    Plain (P2) 16-bit grayscale. Values are min-max scaled to 0..65535 and the
    scaling is stored in a JSON sidecar (``<name>.pgm.json``) so intensities
    can be recovered.
"""
from __future__ import annotations

import hashlib
import io as _io
import json
import math
import os
import struct
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .core import FormatError, HyperCube, SpectralAxis, ValidationError

HSDC_MAGIC = b"HSDC"
_HSDC_HEADER = struct.Struct("<4sIII")
PGM_MAXVAL = 65535


@contextmanager
def atomic_path(path):
    """Yield a ``.partial`` sibling of ``path``; rename it into place on success."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    try:
        yield tmp
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise
    os.replace(tmp, path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} contains non-finite values")


# ---------------------------------------------------------------- CSV

def write_csv(path, matrix, axis=None) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    _check_finite(m, "matrix")
    buf = _io.StringIO()
    if axis is not None:
        ax = axis.values if isinstance(axis, SpectralAxis) else np.asarray(axis, dtype=np.float64)
        if ax.size != m.shape[1]:
            raise ValidationError("axis length does not match column count")
        buf.write("#" + ",".join(format(float(v), ".17g") for v in ax) + "\n")
    np.savetxt(buf, m, delimiter=",", fmt="%.17g")
    with atomic_path(path) as tmp:
        tmp.write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path):
    """Return ``(matrix, axis)``; ``axis`` is None when the file has no header."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty CSV file")
    axis = None
    if lines[0].startswith("#"):
        try:
            axis = np.array([float(t) for t in lines[0][1:].split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: bad axis header: {exc}") from None
        lines = lines[1:]
    if not lines:
        raise FormatError(f"{path}: no data rows")
    try:
        rows = [[float(t) for t in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: ragged rows")
    m = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite values")
    if axis is not None:
        if axis.size != width:
            raise FormatError(f"{path}: axis header has {axis.size} entries for {width} columns")
        axis = SpectralAxis(axis)
    return m, axis


# ---------------------------------------------------------------- HSDC

def hsdc_bytes(cube) -> bytes:
    c = cube.values if isinstance(cube, HyperCube) else np.asarray(cube, dtype=np.float64)
    if c.ndim != 3:
        raise ValidationError("cube must be 3-D")
    _check_finite(c, "cube")
    header = _HSDC_HEADER.pack(HSDC_MAGIC, *c.shape)
    return header + np.ascontiguousarray(c, dtype="<f8").tobytes()


def write_hsdc(path, cube) -> None:
    data = hsdc_bytes(cube)
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def parse_hsdc(data: bytes) -> np.ndarray:
    if len(data) < _HSDC_HEADER.size:
        raise FormatError("HSDC: truncated header")
    magic, nx, ny, nv = _HSDC_HEADER.unpack_from(data)
    if magic != HSDC_MAGIC:
        raise FormatError("HSDC: bad magic")
    expected = _HSDC_HEADER.size + 8 * nx * ny * nv
    if len(data) != expected:
        raise FormatError(f"HSDC: expected {expected} bytes, got {len(data)}")
    c = np.frombuffer(data, dtype="<f8", offset=_HSDC_HEADER.size).reshape(nx, ny, nv)
    if not np.all(np.isfinite(c)):
        raise FormatError("HSDC: non-finite values")
    return c.astype(np.float64)


def read_hsdc(path, axis=None) -> HyperCube:
    return HyperCube(parse_hsdc(Path(path).read_bytes()), axis)


# ---------------------------------------------------------------- JSON

def to_jsonable(obj):
    """Convert numpy containers and non-finite floats into strict JSON values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False)
    with atomic_path(path) as tmp:
        tmp.write_text(text + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- PGM

def pgm_scale(image):
    """Min-max scale a 2-D image to integers ``0..65535``; returns ``(ints, meta)``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError("PGM image must be 2-D")
    _check_finite(img, "image")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        q = np.rint((img - lo) / (hi - lo) * PGM_MAXVAL).astype(np.int64)
    else:
        q = np.zeros(img.shape, dtype=np.int64)
    return q, {"min": lo, "max": hi, "maxval": PGM_MAXVAL}


def write_pgm(path, image) -> dict:
    """Write ``image`` (rows = x, columns = y) as P2 plus a scaling sidecar."""
    q, meta = pgm_scale(image)
    h, w = q.shape
    lines = ["P2", f"{w} {h}", str(PGM_MAXVAL)]
    lines += [" ".join(map(str, row)) for row in q.tolist()]
    path = Path(path)
    with atomic_path(path) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="ascii")
    write_json(path.with_name(path.name + ".json"), meta)
    return meta


def read_pgm(path, rescale: bool = False):
    """Read a P2 file; with ``rescale`` the sidecar maps levels back to intensities."""
    tokens = []
    for ln in Path(path).read_text(encoding="ascii").splitlines():
        ln = ln.split("#", 1)[0]
        tokens.extend(ln.split())
    if len(tokens) < 4 or tokens[0] != "P2":
        raise FormatError(f"{path}: not a plain PGM file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        data = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if data.size != w * h:
        raise FormatError(f"{path}: expected {w * h} pixels, got {data.size}")
    img = data.reshape(h, w)
    if not rescale:
        return img
    meta = read_json(Path(path).with_name(Path(path).name + ".json"))
    lo, hi = float(meta["min"]), float(meta["max"])
    return lo + img.astype(np.float64) / maxval * (hi - lo)
