"""``chemdim`` command line.

Exit codes: 0 success, 2 invalid arguments or data, 3 file errors,
4 numerical failure. ``CHEMDIM_THREADS`` supplies ``--threads`` when unset.
Every command writes a ``run_manifest.json`` (parameters, seeds, input and
output hashes) next to its outputs; outputs do not depend on the thread count.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._parallel import resolve_threads
from .baselines import METHODS, run_baselines
from .bench import ALL_METHODS, expand_grid, run_benchmark
from .core import FormatError, NumericalError, ValidationError, normalize_rows, unfold
from .estimator import DEFAULT_G, NmfParams, estimate
from .extractor import extract, reconstruct
from .io import (atomic_path, read_csv, read_hsdc, read_json, sha256_file, write_csv,
                 write_json, write_pgm)
from .simplex import CandidateMatrix, build_candidates
from .synth import SyntheticSpec, make_dataset

log = logging.getLogger("chemdim")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(ValidationError):
    pass


# ---------------------------------------------------------------- helpers

def _versions():
    return {"chemdim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest(command, args, inputs=(), outputs=(), **extra):
    params = {k: v for k, v in vars(args).items() if k not in ("func", "threads", "log_level")}
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()}
    return {
        "command": command,
        "params": params,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "versions": _versions(),
        **extra,
    }


def _load_matrix(args):
    """Data matrix, axis, pixel map (cubes only) and input paths."""
    if getattr(args, "cube", None):
        cube = read_hsdc(args.cube)
        if cube.values.shape[0] * cube.values.shape[1] < 2:
            raise ValidationError("cube must hold at least 2 pixels")
        z, pmap = unfold(cube)
        return z, cube.axis, pmap, [args.cube]
    if getattr(args, "input", None):
        z, axis = read_csv(args.input)
        return z, axis, None, [args.input]
    raise UsageError("one of --in or --cube is required")


def _curves_csv(report) -> str:
    c = report.curves
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "sse", "eps", "rho", "entropy"])
    for u in range(1, c.g + 1):
        rho = c.rho_at(u) if 2 <= u <= c.g - 1 else ""
        w.writerow([u, repr(float(c.s[u - 1])), repr(float(c.eps[u - 1])),
                    repr(rho) if rho != "" else "", repr(float(c.S[u - 1]))])
    return buf.getvalue()


def _write_text(path, text):
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} needs an explicit --seed")
    if args.seed < 0:
        raise UsageError("--seed must be nonnegative")


def _check_range(name, value, lo=None, hi=None):
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise UsageError(f"--{name} must lie in [{lo}, {hi}], got {value}")


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    _require_seed(args)
    spec = SyntheticSpec(k=args.k, n=args.n, p=args.p, snr=args.snr, seed=args.seed,
                         normalize_endmembers=not args.no_normalize)
    ds = make_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = out / "data.csv", out / "ground_truth.json"
    write_csv(data, ds.z, ds.axis)
    write_json(truth, {"spec": spec.to_dict(), "sigma": ds.sigma, **ds.truth.to_dict()})
    write_json(out / "run_manifest.json", _manifest("synth", args, outputs=[data, truth]))
    print(f"wrote {data} ({ds.z.shape[0]} x {ds.z.shape[1]})")


def cmd_estimate(args):
    _require_seed(args)
    _check_range("g", args.g, 3)
    z, axis, _, inputs = _load_matrix(args)
    if z.shape[0] < args.g:
        raise ValidationError(f"--g {args.g} needs at least {args.g} samples, got {z.shape[0]}")
    report = estimate(z, g=args.g, seed=args.seed, axis=axis, normalize=args.normalize,
                      nmf=NmfParams(args.nmf_tol, args.nmf_max_iter), max_sweeps=args.max_sweeps,
                      threads=args.threads, center=not args.uncentered)
    path = Path(args.report)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc.pop("timings", None)   # keep the report byte-identical across runs
    doc["input"] = {"path": str(inputs[0]), "sha256": sha256_file(inputs[0]),
                    "kind": "cube" if args.cube else "csv"}
    write_json(path, doc)
    curves = path.with_name(path.stem + "_curves.csv")
    _write_text(curves, _curves_csv(report))
    write_json(path.with_name("run_manifest.json"),
               _manifest("estimate", args, inputs, [path, curves]))
    log.info("timings: %s", report.timings)
    print(f"k_CD = {report.k_cd} (argmax rho at u = {report.z})")


def _candidates_from_report(doc, z):
    cand = doc.get("candidates")
    if not cand:
        raise ValidationError("report carries no candidate provenance")
    src = np.asarray(cand["source_rows"], dtype=int)
    if src.size == 0 or src.min() < 0 or src.max() >= z.shape[0]:
        raise ValidationError("report candidate rows do not fit the input data")
    return CandidateMatrix(z[src].copy(), np.asarray(cand["level"]), np.asarray(cand["slot"]),
                           src, {})


def cmd_extract(args):
    z, axis, _, inputs = _load_matrix(args)
    doc = None
    if args.from_report:
        doc = read_json(args.from_report)
        inputs.append(args.from_report)
        if doc.get("input", {}).get("sha256") not in (None, sha256_file(inputs[0])):
            raise ValidationError("report was computed from a different input file")
        if doc.get("normalized"):
            z = normalize_rows(z)
    k = args.k if args.k is not None else (doc or {}).get("k_cd")
    if k is None:
        raise UsageError("give --k or --from-report")
    if k < 2:
        raise UsageError("--k must be >= 2")
    if doc is not None:
        cand = _candidates_from_report(doc, z)
    else:
        _require_seed(args)
        _check_range("g", args.g, 3)
        if args.normalize:
            z = normalize_rows(z)
        cand = build_candidates(z, args.g, seed=args.seed, max_sweeps=args.max_sweeps,
                                threads=args.threads, center=not args.uncentered)
    es = extract(cand, k, axis, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spectra = out / "endmembers.csv"
    write_csv(spectra, es.spectra, axis)
    info = out / "endmembers.json"
    ids = [f"E{j + 1}" for j in range(es.k)]
    write_json(info, {"ids": ids, **es.to_dict()})
    write_json(out / "run_manifest.json", _manifest("extract", args, inputs, [spectra, info]))
    print(f"extracted {es.k} endmembers, P_L2 = {es.p_l2:.6g}, source rows {es.source_rows.tolist()}")


def cmd_reconstruct(args):
    inputs = []
    if args.cube:
        cube = read_hsdc(args.cube)
        z, pmap = unfold(cube)
        inputs.append(args.cube)
    else:
        raise UsageError("--cube is required")
    e, _ = read_csv(args.endmembers)
    inputs.append(args.endmembers)
    if e.shape[1] != z.shape[1]:
        raise ValidationError(f"endmembers have {e.shape[1]} channels, cube has {z.shape[1]}")
    amap, images = reconstruct(z, e, pmap, threads=args.threads)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    ab = out / "abundances.csv"
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"] + list(amap.endmember_ids))
    for (x, y), row in zip(pmap.coords.tolist(), amap.weights):
        w.writerow([x, y] + [format(v, ".17g") for v in row])
    _write_text(ab, buf.getvalue())
    outputs.append(ab)
    links = {}
    for eid, img in zip(amap.endmember_ids, images):
        path = out / f"abundance_{eid}.pgm"
        meta = write_pgm(path, img)
        outputs += [path, path.with_name(path.name + ".json")]
        links[eid] = {"image": path.name, "scaling": path.name + ".json", **meta}
    index = out / "images.json"
    write_json(index, {"shape": [pmap.nx, pmap.ny], "endmembers": links})
    outputs.append(index)
    write_json(out / "run_manifest.json", _manifest("reconstruct", args, inputs, outputs))
    print(f"wrote {len(images)} abundance images to {out}")


def _baseline_csv(results) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "estimate", "degenerate", "raw"])
    for r in results:
        w.writerow([r.method, r.cell, str(r.degenerate).lower(), "" if r.raw is None else r.raw])
    return buf.getvalue()


def cmd_baselines(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown method(s) {unknown}; choose from {','.join(METHODS)}")
    _check_range("pf", args.pf, 0.0, 1.0)
    z, _, _, inputs = _load_matrix(args)
    results = run_baselines(z, methods, pf=args.pf, normalize=args.normalize)
    text = _baseline_csv(results)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_text(out, text)
        write_json(out.with_name("run_manifest.json"), _manifest("baselines", args, inputs, [out]))
    sys.stdout.write(text)


def cmd_bench(args):
    _require_seed(args)
    grid = expand_grid(read_json(args.grid_file))
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    res = run_benchmark(grid, args.repeats, methods, seed=args.seed, g=args.g, pf=args.pf,
                        threads=args.threads,
                        progress=lambda i, s: log.info("spec %d done (k=%d n=%d snr=%g)",
                                                       i, s.k, s.n, s.snr))
    out = Path(args.out)
    written = res.write(out)
    manifest = res.manifest()
    manifest["inputs"] = {str(args.grid_file): sha256_file(args.grid_file)}
    manifest["outputs"] = {p.name: sha256_file(p) for p in written if p.name != "run_manifest.json"}
    manifest["versions"] = _versions()
    write_json(out / "run_manifest.json", manifest)
    sys.stdout.write(res.comparison_csv())


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chemdim", description="Chemical dimensionality estimation "
                                "and endmember extraction for hyperspectral data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $CHEMDIM_THREADS or 1)")
    common.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, cube=True):
        sp.add_argument("--in", dest="input", type=Path, help="CSV data matrix (rows = samples)")
        if cube:
            sp.add_argument("--cube", type=Path, help="HSDC datacube")

    def cand_args(sp):
        sp.add_argument("--g", type=int, default=DEFAULT_G, help="largest simplex size")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--normalize", action="store_true", help="scale spectra to unit length")
        sp.add_argument("--max-sweeps", type=int, default=5)
        sp.add_argument("--uncentered", action="store_true",
                        help="reduce the raw instead of the column-centered data")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic mixture dataset")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--p", type=int, default=1001)
    s.add_argument("--snr", type=float, default=1000.0)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--no-normalize", action="store_true", help="keep endmember scale")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("estimate", parents=[common], help="estimate the chemical dimensionality")
    data_args(s)
    cand_args(s)
    s.add_argument("--nmf-tol", type=float, default=NmfParams.tol)
    s.add_argument("--nmf-max-iter", type=int, default=NmfParams.max_iter)
    s.add_argument("--report", type=Path, required=True, help="JSON report path")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("extract", parents=[common], help="extract endmember spectra")
    data_args(s)
    cand_args(s)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--from-report", type=Path, default=None,
                   help="estimate report: reuse its k_CD and candidate rows")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("reconstruct", parents=[common], help="abundance images by NNLS")
    s.add_argument("--cube", type=Path, required=True)
    s.add_argument("--endmembers", type=Path, required=True, help="endmember CSV")
    s.add_argument("--outdir", type=Path, required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("baselines", parents=[common], help="reference dimensionality estimators")
    data_args(s)
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--pf", type=float, default=1e-5, help="HFC false-alarm probability")
    s.add_argument("--normalize", action="store_true")
    s.add_argument("--out", type=Path, default=None, help="comparison CSV path")
    s.set_defaults(func=cmd_baselines)

    s = sub.add_parser("bench", parents=[common], help="confusion matrices over a synthetic grid")
    s.add_argument("--grid-file", type=Path, required=True,
                   help="JSON list of spec objects; list values expand as a product")
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--g", type=int, default=DEFAULT_G)
    s.add_argument("--pf", type=float, default=1e-5)
    s.add_argument("--methods", default=",".join(ALL_METHODS))
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.threads = resolve_threads(args.threads)
        args.func(args)
    except FormatError as exc:
        print(f"chemdim: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"chemdim: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"chemdim: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"chemdim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
