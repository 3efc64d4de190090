"""Command-line interface: ``crtube analyze | model-check | jet-eval``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .curvature import CurvatureSample, curvature_grid
from .errors import CRTubeError, ParseError
from .exprlang import BIVARIATE, UNIVARIATE, eval_jet, parse
from .flatness import classify
from .so32 import run_model_checks
from .surface import admissibility, grid_points, load_spec

EXIT_OK, EXIT_ERROR, EXIT_NOT_FLAT = 0, 1, 2


def _grid(text):
    try:
        a, b = text.lower().split("x")
        n1, n2 = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 21x21, got {text!r}") from None
    if n1 < 1 or n2 < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return n1, n2


def _point(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _timestamp():
    # SOURCE_DATE_EPOCH pins the timestamp so reports can be reproduced byte for byte.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc)
    )
    return when.replace(microsecond=0).isoformat()


def to_jsonable(obj):
    """Plain JSON data; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def build_report(spec, grid, tol, do_classify, seed):
    points = grid_points(spec, grid)
    adm = admissibility(spec, points, tol)
    samples = curvature_grid(spec, points, tol)
    report = {
        "tool_version": __version__,
        "timestamp": _timestamp(),
        "tolerances": {"curvature": tol, "classification": spec.tolerance or 1e-8},
        "grid": {"shape": list(grid), "domain": {k: list(v) for k, v in spec.domain.items()}, "seed": seed},
        "spec_echo": {**spec.to_dict(), "shift": list(spec.shift)},
        "admissibility": adm.to_dict(),
        "samples": [s.to_dict() if isinstance(s, CurvatureSample) else s for s in samples],
    }
    good = [s for s in samples if isinstance(s, CurvatureSample)]
    report["summary"] = {
        "points": len(samples),
        "errors": len(samples) - len(good),
        "max_abs_theta2_21": max((abs(s.theta2_21) for s in good), default=None),
        "max_abs_theta2_10": max((abs(s.theta2_10) for s in good), default=None),
    }
    if do_classify:
        report["classification"] = classify(spec, tol=spec.tolerance or 1e-8, seed=seed).to_dict()
    return to_jsonable(report)


def _write_csv(path, samples):
    cols = CurvatureSample.CSV_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ("error",))
        for s in samples:
            w.writerow([repr(s[c]) if isinstance(s.get(c), float) else s.get(c, "") for c in cols] + [s.get("error", "")])


def cmd_analyze(args):
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = load_spec(fh.read())
        report = build_report(spec, args.grid, args.tol, args.classify or args.expect_flat, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except CRTubeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = json.dumps(report, indent=2, allow_nan=False)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        _write_csv(args.csv, report["samples"])
    cls = report.get("classification")
    if cls is not None:
        line = f"verdict: {cls['verdict']}"
        if cls["is_flat"]:
            line += f" ({cls['case']}, verify residual {cls.get('verify_residual')})"
        else:
            line += f" (failed {cls['failed']} at v={cls.get('where')})"
        print(line, file=sys.stderr)
        if args.expect_flat and not cls["is_flat"]:
            return EXIT_NOT_FLAT
    return EXIT_OK


def cmd_model_check(args):
    results = run_model_checks(seed=args.seed, trials=args.trials)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ERROR


def _caret(src, offset):
    # offsets are byte offsets; convert back to a character column
    col = len(src.encode("utf-8")[:offset].decode("utf-8", errors="ignore"))
    return f"  {src}\n  {' ' * col}^"


def cmd_jet_eval(args):
    names = UNIVARIATE if args.vars == "v" else BIVARIATE
    try:
        e = parse(args.expr, names)
        at = args.at
        if args.vars == "v":
            if len(at) != 1:
                raise ValueError("--at takes one number for --vars v")
            j = eval_jet(e, at[0], args.degree)
            rows = [((k,), j.coeffs[k]) for k in range(j.degree + 1)]
        else:
            if len(at) != 2:
                raise ValueError("--at takes two numbers t1,t2")
            j = eval_jet(e, at, args.degree)
            rows = [((i, k - i), j[i, k - i]) for k in range(j.degree + 1) for i in range(k, -1, -1)]
    except ParseError as exc:
        print(f"error: {exc}\n{_caret(args.expr, exc.offset)}", file=sys.stderr)
        return EXIT_ERROR
    except (CRTubeError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print("index\tcoefficient")
    for idx, c in rows:
        print(f"({','.join(map(str, idx))})\t{float(c)!r}")
    return EXIT_OK


def make_parser():
    ap = argparse.ArgumentParser(prog="crtube", description="CR-flatness analysis of tube hypersurfaces in C^3.")
    ap.add_argument("--version", action="version", version=f"crtube {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="admissibility, curvature grid and optional flatness classification")
    a.add_argument("spec", help="JSON spec file")
    a.add_argument("--grid", type=_grid, default=(21, 21), help="grid shape, e.g. 21x21")
    a.add_argument("--tol", type=float, default=1e-9)
    a.add_argument("--classify", action="store_true")
    a.add_argument("--expect-flat", action="store_true", help="exit 2 unless the surface classifies Flat")
    a.add_argument("--out", help="write the JSON report here instead of stdout")
    a.add_argument("--csv", help="also write per-sample rows as CSV")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("model-check", help="run the so(3,2) model checks")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--trials", type=int, default=200)
    m.set_defaults(func=cmd_model_check)

    j = sub.add_parser("jet-eval", help="print the Taylor coefficients of an expression")
    j.add_argument("--expr", required=True)
    j.add_argument("--at", type=_point, default=(0.0, 0.0))
    j.add_argument("--degree", type=int, default=3)
    j.add_argument("--vars", choices=("t1,t2", "v"), default="t1,t2")
    j.set_defaults(func=cmd_jet_eval)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
