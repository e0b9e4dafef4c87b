import json

import numpy as np
import pytest

from chemdim.cli import main
from chemdim.core import HyperCube
from chemdim.io import read_csv, read_json, read_pgm, write_csv, write_hsdc


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--k", 3, "--n", 300, "--p", 101, "--seed", 2, "--out", out) == 0
    return out


def _no_partials(path):
    return not list(path.rglob("*.partial"))


def test_synth_outputs(synth_dir):
    z, axis = read_csv(synth_dir / "data.csv")
    assert z.shape == (300, 101) and len(axis) == 101
    truth = read_json(synth_dir / "ground_truth.json")
    assert truth["k"] == 3 and len(truth["pure_rows"]) == 3
    assert set(read_json(synth_dir / "run_manifest.json")["outputs"]) == {"data.csv", "ground_truth.json"}
    assert _no_partials(synth_dir)


def test_synth_same_seed_identical(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--k", 2, "--n", 50, "--p", 21, "--seed", 9, "--out", tmp_path / d) == 0
    for name in ("data.csv", "ground_truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_full_size(tmp_path):
    assert run("synth", "--k", 5, "--n", 5000, "--p", 1001, "--seed", 0, "--out", tmp_path) == 0
    lines = (tmp_path / "data.csv").read_text().splitlines()
    assert len(lines) == 5001 and lines[0].startswith("#")
    assert len(lines[1].split(",")) == 1001


def test_seed_is_required(tmp_path, synth_dir, capsys):
    assert run("synth", "--k", 2, "--out", tmp_path) == 2
    assert run("estimate", "--in", synth_dir / "data.csv", "--report", tmp_path / "r.json") == 2
    assert "seed" in capsys.readouterr().err


def test_estimate_extract_pipeline(tmp_path, synth_dir):
    rep = tmp_path / "rep" / "report.json"
    assert run("estimate", "--in", synth_dir / "data.csv", "--g", 10, "--seed", 1, "--report", rep) == 0
    doc = read_json(rep)
    assert doc["k_cd"] == 3 and "timings" not in doc
    assert doc["input"]["sha256"] == read_json(rep.parent / "run_manifest.json")["inputs"][
        str(synth_dir / "data.csv")]
    curves = (rep.parent / "report_curves.csv").read_text().splitlines()
    assert curves[0] == "u,sse,eps,rho,entropy" and len(curves) == 11
    out = tmp_path / "em"
    assert run("extract", "--in", synth_dir / "data.csv", "--from-report", rep, "--out", out) == 0
    e, _ = read_csv(out / "endmembers.csv")
    info = read_json(out / "endmembers.json")
    truth = read_json(synth_dir / "ground_truth.json")
    assert e.shape == (3, 101)
    assert sorted(info["source_rows"]) == sorted(truth["pure_rows"])
    assert _no_partials(tmp_path)


def test_extract_k_validation(tmp_path, synth_dir):
    assert run("extract", "--in", synth_dir / "data.csv", "--k", 1, "--seed", 0,
               "--out", tmp_path) == 2
    assert run("extract", "--in", synth_dir / "data.csv", "--out", tmp_path) == 2


def test_extract_direct_is_idempotent(tmp_path, synth_dir):
    for d in ("a", "b"):
        assert run("extract", "--in", synth_dir / "data.csv", "--k", 3, "--g", 8, "--seed", 4,
                   "--out", tmp_path / d) == 0
    assert (tmp_path / "a" / "endmembers.csv").read_bytes() == \
        (tmp_path / "b" / "endmembers.csv").read_bytes()
    assert read_json(tmp_path / "a" / "endmembers.json")["swaps"] is not None


def test_normalize_flag_echoed(tmp_path, synth_dir):
    rep = tmp_path / "r.json"
    assert run("estimate", "--in", synth_dir / "data.csv", "--g", 5, "--seed", 0,
               "--normalize", "--report", rep) == 0
    assert read_json(rep)["normalized"] is True


def test_minimal_g3(tmp_path, synth_dir):
    assert run("estimate", "--in", synth_dir / "data.csv", "--g", 3, "--seed", 0,
               "--report", tmp_path / "r.json") == 0


def test_reconstruct_tiny_cube(tmp_path):
    e = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
    cube = np.zeros((2, 2, 3))
    cube[0, 0] = e[0]
    cube[0, 1] = e[1]
    cube[1, 0] = 0.5 * e[0] + 0.5 * e[1]
    write_hsdc(tmp_path / "c.hsdc", HyperCube(cube))
    write_csv(tmp_path / "e.csv", e)
    out = tmp_path / "rec"
    assert run("reconstruct", "--cube", tmp_path / "c.hsdc", "--endmembers", tmp_path / "e.csv",
               "--outdir", out) == 0
    img = read_pgm(out / "abundance_E1.pgm", rescale=True)
    assert img.shape == (2, 2)
    assert img == pytest.approx(np.array([[1.0, 0.0], [0.5, 0.0]]), abs=1e-4)
    rows = (out / "abundances.csv").read_text().splitlines()
    assert rows[0] == "x,y,E1,E2" and rows[4].startswith("1,1,0,0")
    index = read_json(out / "images.json")
    assert index["endmembers"]["E2"]["image"] == "abundance_E2.pgm"


def test_reconstruct_channel_mismatch(tmp_path):
    write_hsdc(tmp_path / "c.hsdc", HyperCube(np.ones((2, 2, 3))))
    write_csv(tmp_path / "e.csv", np.ones((2, 4)))
    assert run("reconstruct", "--cube", tmp_path / "c.hsdc", "--endmembers", tmp_path / "e.csv",
               "--outdir", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists() or _no_partials(tmp_path / "o")


def test_baselines_cli(tmp_path, synth_dir, capsys):
    assert run("baselines", "--in", synth_dir / "data.csv", "--methods", "aic,mdl,fif",
               "--out", tmp_path / "b.csv") == 0
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "method,estimate,degenerate,raw"
    # n = 300 > p = 101 here, so nothing is degenerate
    assert all(r.split(",")[2] == "false" for r in rows[1:])
    assert run("baselines", "--in", synth_dir / "data.csv", "--methods", "aic,bogus") == 2


def test_baselines_degenerate_dashes(tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_csv(tmp_path / "z.csv", np.abs(rng.standard_normal((10, 30))))
    assert run("baselines", "--in", tmp_path / "z.csv", "--methods", "aic,mdl,fif") == 0
    out = capsys.readouterr().out.splitlines()
    assert [r.split(",")[1:3] for r in out[1:]] == [["--", "true"]] * 3


def test_bench_cli(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps([{"k": [2, 3], "n": 100, "p": 41}]))
    out = tmp_path / "bench"
    assert run("bench", "--grid-file", tmp_path / "g.json", "--repeats", 2, "--seed", 0,
               "--g", 6, "--methods", "cd,mdl", "--out", out) == 0
    assert (out / "confusion_cd.csv").read_text().splitlines()[0] == "true\\estimated,2,3"
    manifest = read_json(out / "run_manifest.json")
    assert set(manifest["outputs"]) == {"confusion_cd.csv", "confusion_mdl.csv",
                                        "comparison_table.csv"}


def test_io_and_format_exit_codes(tmp_path):
    assert run("estimate", "--in", tmp_path / "missing.csv", "--seed", 0,
               "--report", tmp_path / "r.json") == 3
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert run("baselines", "--in", tmp_path / "bad.csv") == 3
    (tmp_path / "bad.hsdc").write_bytes(b"HSDC")
    assert run("estimate", "--cube", tmp_path / "bad.hsdc", "--seed", 0,
               "--report", tmp_path / "r.json") == 3


def test_threads_env_fallback(tmp_path, synth_dir, monkeypatch):
    monkeypatch.setenv("CHEMDIM_THREADS", "0")
    assert run("estimate", "--in", synth_dir / "data.csv", "--g", 4, "--seed", 0,
               "--report", tmp_path / "r.json") == 2
    monkeypatch.setenv("CHEMDIM_THREADS", "2")
    assert run("estimate", "--in", synth_dir / "data.csv", "--g", 4, "--seed", 0,
               "--report", tmp_path / "r.json") == 0
