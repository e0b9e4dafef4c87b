import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemdim.core import FormatError, HyperCube, SpectralAxis, ValidationError
from chemdim.io import (atomic_path, hsdc_bytes, parse_hsdc, read_csv, read_hsdc, read_json,
                        read_pgm, write_csv, write_hsdc, write_json, write_pgm)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_csv_roundtrip_bit_exact(tmp_path, rng):
    m = rng.standard_normal((3, 4))
    write_csv(tmp_path / "m.csv", m)
    back, axis = read_csv(tmp_path / "m.csv")
    assert axis is None
    assert back.tobytes() == m.tobytes()


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_csv_roundtrip_any_finite(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_csv(path, m)
    back, _ = read_csv(path)
    assert back.tobytes() == m.tobytes()


def test_csv_axis_header(tmp_path):
    ax = SpectralAxis(np.array([900.5, 1000.25, 1100.0]))
    write_csv(tmp_path / "m.csv", np.eye(3), ax)
    assert (tmp_path / "m.csv").read_text().startswith("#")
    _, axis = read_csv(tmp_path / "m.csv")
    assert np.array_equal(axis.values, ax.values)


@pytest.mark.parametrize("text", ["", "\n\n", "1,2\n3\n", "a,b\n", "#1,2\n", "1,nan\n"])
def test_csv_malformed(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(FormatError):
        read_csv(tmp_path / "bad.csv")


def test_csv_rejects_non_finite_on_write(tmp_path):
    with pytest.raises(ValidationError):
        write_csv(tmp_path / "m.csv", np.array([[1.0, np.inf]]))


def test_hsdc_byte_count():
    # header: 4 magic + 3 * u32 = 16; payload 2*2*2 float64 = 64
    data = hsdc_bytes(HyperCube(np.zeros((2, 2, 2))))
    assert len(data) == 16 + 2 * 2 * 2 * 8
    assert data[:4] == b"HSDC"
    assert data[4:16] == (2).to_bytes(4, "little") * 3


def test_hsdc_channel_fastest():
    c = np.arange(12, dtype=float).reshape(2, 3, 2)
    data = hsdc_bytes(HyperCube(c))
    vals = np.frombuffer(data[16:], dtype="<f8")
    assert vals[:4].tolist() == [c[0, 0, 0], c[0, 0, 1], c[0, 1, 0], c[0, 1, 1]]


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.data())
def test_hsdc_roundtrip(nx, ny, nv, data):
    c = data.draw(arrays(np.float64, (nx, ny, nv), elements=finite))
    assert parse_hsdc(hsdc_bytes(HyperCube(c))).tobytes() == c.tobytes()


def test_hsdc_file_roundtrip(tmp_path, rng):
    c = rng.standard_normal((3, 2, 5))
    write_hsdc(tmp_path / "c.hsdc", HyperCube(c))
    assert read_hsdc(tmp_path / "c.hsdc").values.tobytes() == c.tobytes()


@pytest.mark.parametrize("data", [b"", b"HSD", b"XXXX" + bytes(12),
                                  b"HSDC" + (1).to_bytes(4, "little") * 3 + bytes(4)])
def test_hsdc_malformed(data):
    with pytest.raises(FormatError):
        parse_hsdc(data)


def test_hsdc_non_finite_payload():
    data = b"HSDC" + (1).to_bytes(4, "little") * 3 + np.array([np.nan]).tobytes()
    with pytest.raises(FormatError):
        parse_hsdc(data)


def test_json_non_finite_as_strings(tmp_path):
    write_json(tmp_path / "r.json", {"a": np.array([1.0, np.inf, -np.inf, np.nan]), "b": np.int64(3)})
    doc = read_json(tmp_path / "r.json")
    assert doc == {"a": [1.0, "inf", "-inf", "nan"], "b": 3}
    json.loads((tmp_path / "r.json").read_text())   # strict JSON


def test_json_malformed(tmp_path):
    (tmp_path / "r.json").write_text("{")
    with pytest.raises(FormatError):
        read_json(tmp_path / "r.json")


def test_pgm_scaling_recoverable(tmp_path):
    img = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
    meta = write_pgm(tmp_path / "a.pgm", img)
    assert meta == {"min": 0.0, "max": 5.0, "maxval": 65535}
    q = read_pgm(tmp_path / "a.pgm")
    assert q.shape == (2, 3) and q[0, 0] == 0 and q[1, 2] == 65535
    back = read_pgm(tmp_path / "a.pgm", rescale=True)
    assert np.allclose(back, img, atol=5.0 / 65535)
    assert (tmp_path / "a.pgm").read_text().splitlines()[:3] == ["P2", "3 2", "65535"]


def test_pgm_constant_image(tmp_path):
    write_pgm(tmp_path / "c.pgm", np.full((2, 2), 3.0))
    assert np.all(read_pgm(tmp_path / "c.pgm") == 0)
    assert np.all(read_pgm(tmp_path / "c.pgm", rescale=True) == 3.0)


def test_atomic_write_leaves_no_partial(tmp_path):
    target = tmp_path / "x.txt"
    with pytest.raises(RuntimeError):
        with atomic_path(target) as tmp:
            tmp.write_text("half")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []
    with atomic_path(target) as tmp:
        assert tmp.name == "x.txt.partial"
        tmp.write_text("done")
    assert target.read_text() == "done"
    assert list(tmp_path.iterdir()) == [target]
