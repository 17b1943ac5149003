"""Command-line front end.

Subcommands read CSV/JSON inputs and write JSON reports (CSV for grid and
table dumps). Exit status is 0 on success, 2 for invalid input and 3 for a
numerical failure; every failure also prints one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import INTERFACE_VERSION, __version__
from .exceptions import NumericalError, ValidationError
from .fpca import cv_select_bandwidth, fpca_dual, prepare_sample, write_eigenfunctions_csv, write_scores_csv
from .iv import (
    MIN_TAU,
    generate_synthetic_quotes,
    read_quotes_csv,
    run_iv_pipeline,
    write_quotes_csv,
)
from .simulation import load_study, run_study, run_theorem_diagnostics
from .smoothing import SMOOTHERS, default_bandwidth, read_curves_csv
from .twosample import TestKind, _bootstrap, battery_kinds


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _clean(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(obj, path):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _domain(text):
    lo, hi = _floats(text)
    return lo, hi


def _grid(args, curves):
    lo, hi = curves[0].domain
    return (lo, hi, args.grid_size)


def cmd_fpca(args) -> dict:
    args.r0 = args.r0 or 3
    curves = read_curves_csv(args.input, _domain(args.domain))
    grid = _grid(args, curves)
    out = {}
    if args.cv:
        b, crit = cv_select_bandwidth(curves, args.r0, args.cv, args.smoother, grid=grid)
        out["cv"] = {"candidates": args.cv, "criterion": crit}
    else:
        b = args.bandwidth if args.bandwidth is not None else default_bandwidth(curves, args.smoother, grid)
    fit = fpca_dual(curves, b, args.r0, args.smoother, grid=grid)
    out.update(fit.to_dict(include_functions=args.include_functions))
    out["curve_ids"] = [c.curve_id for c in curves]
    if args.eigenfunctions:
        write_eigenfunctions_csv(args.eigenfunctions, fit)
    if args.scores:
        write_scores_csv(args.scores, fit, [c.curve_id for c in curves])
    return out


def cmd_test(args) -> dict:
    dom = _domain(args.domain)
    s1, s2 = read_curves_csv(args.sample1, dom), read_curves_csv(args.sample2, dom)
    grid = _grid(args, s1)
    b1 = args.bandwidth if args.bandwidth is not None else default_bandwidth(s1, args.smoother, grid)
    b2 = args.bandwidth2 if args.bandwidth2 is not None else (
        args.bandwidth if args.bandwidth is not None else default_bandwidth(s2, args.smoother, grid))
    kinds = []
    for k in args.kind:
        if k == "battery":
            kinds += battery_kinds(args.r_max, args.l_max)
        else:
            kinds.append(TestKind.parse(k))
    p1 = prepare_sample(s1, b1, args.smoother, grid=grid)
    p2 = prepare_sample(s2, b2, args.smoother, grid=grid)
    reports = _bootstrap(p1, p2, kinds, args.B, args.alpha, args.seed, args.r0, True)
    return {"bandwidths": [b1, b2], "smoother": args.smoother,
            "tests": [r.to_dict(include_replicates=args.include_replicates) for r in reports]}


def cmd_simulate(args) -> dict:
    study = load_study(args.study, args.profile, args.seed)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    table = run_study(study, workers=args.threads, progress=progress)
    if args.output_prefix:
        table.to_csv(args.output_prefix + ".csv")
        table.to_json(args.output_prefix + ".json")
    out = table.to_dict()
    out["metadata"]["profile"] = study.profile
    return out


def cmd_diagnose(args) -> dict:
    summary = run_theorem_diagnostics(args.lambdas, args.n_list, args.T_list, args.trials, args.seed,
                                      n_fixed=args.n_fixed)
    return summary.to_dict()


def _group_taus(text):
    out = {}
    for part in text.split(","):
        label, _, tau = part.partition("=")
        try:
            out[label.strip()] = float(tau)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected LABEL=TAU pairs, got {part!r}") from None
    return out


def cmd_iv(args) -> dict:
    quotes, dropped = read_quotes_csv(args.quotes, args.min_tau)
    res = run_iv_pipeline(quotes, args.groups, args.L, args.B, args.alpha, args.seed, args.grid_size)
    report = res["report"]
    if args.eigenfunctions_prefix:
        for label, fit in zip(report.labels, report.fits):
            write_eigenfunctions_csv(f"{args.eigenfunctions_prefix}_{label}.csv", fit)
        if report.pooled is not None:
            write_eigenfunctions_csv(f"{args.eigenfunctions_prefix}_common.csv", report.pooled)
    out = report.to_dict(include_functions=args.include_functions)
    out["data"] = {
        "quotes": len(quotes), "dropped_short_maturity": dropped, "dates": res["n_dates"],
        "return_curves": {k: s.n for k, s in res["samples"].items()},
        "skipped": res["skipped"], "warnings": res["warnings"],
    }
    return out


def cmd_iv_synth(args) -> dict:
    quotes = generate_synthetic_quotes(args.days, seed=args.seed)
    write_quotes_csv(args.output, quotes)
    return {"quotes": len(quotes), "days": args.days, "path": args.output}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed for all randomness (default 0)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker processes (results do not depend on it)")
    common.add_argument("--output", "-o", default=None, help="JSON report path (default: stdout)")

    smooth = _Parser(add_help=False)
    smooth.add_argument("--domain", default="0,1", help="curve domain 'lo,hi'")
    smooth.add_argument("--smoother", choices=sorted(SMOOTHERS), default="local_linear")
    smooth.add_argument("--grid-size", type=_positive_int, default=500)
    smooth.add_argument("--r0", type=_positive_int, default=None)

    p = _Parser(prog="commonfpc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"commonfpc {__version__} (interface {INTERFACE_VERSION})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fpca", parents=[common, smooth], help="fit principal components to curves in a CSV file")
    f.add_argument("--input", required=True, help="CSV with columns curve_id,t,y")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--bandwidth", "-b", type=float)
    g.add_argument("--cv", type=_floats, help="candidate bandwidths for cross-validation, e.g. 0.02,0.05,0.1")
    f.add_argument("--eigenfunctions", help="CSV dump of mean and eigenfunctions on the grid")
    f.add_argument("--scores", help="CSV dump of scores")
    f.add_argument("--include-functions", action="store_true")
    f.set_defaults(func=cmd_fpca)

    t = sub.add_parser("test", parents=[common, smooth], help="bootstrap two-sample tests")
    t.add_argument("--sample1", required=True)
    t.add_argument("--sample2", required=True)
    t.add_argument("--kind", action="append", required=True,
                   help="mean, eigenvalue(r), eigenfunction(r), eigenspace(L) or battery; repeatable")
    t.add_argument("--r-max", type=_positive_int, default=2, help="battery: largest r")
    t.add_argument("--l-max", type=_positive_int, default=2, help="battery: largest L")
    t.add_argument("--B", type=_positive_int, default=500)
    t.add_argument("--alpha", type=float, default=0.1)
    t.add_argument("--bandwidth", "-b", type=float)
    t.add_argument("--bandwidth2", type=float)
    t.add_argument("--include-replicates", action="store_true")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", parents=[common], help="power study from a JSON study file")
    s.add_argument("--study", required=True)
    s.add_argument("--profile", choices=["desk", "full"], default=None)
    s.add_argument("--output-prefix", help="write PREFIX.csv and PREFIX.json")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", parents=[common], help="Monte-Carlo checks of the large-sample behaviour")
    d.add_argument("--lambdas", type=_floats, default=[10.0, 5.0])
    d.add_argument("--n-list", type=_ints, default=[100, 400])
    d.add_argument("--T-list", type=_ints, default=[50, 100, 200])
    d.add_argument("--n-fixed", type=_positive_int, default=50)
    d.add_argument("--trials", type=_positive_int, default=200)
    d.set_defaults(func=cmd_diagnose)

    v = sub.add_parser("iv", parents=[common], help="implied-volatility common factor analysis of option quotes")
    v.add_argument("--quotes", required=True, help="CSV with columns date,spot,strike,tau,rate,kind,price")
    v.add_argument("--groups", type=_group_taus, default={"1M": 0.12, "3M": 0.36}, help="e.g. 1M=0.12,3M=0.36")
    v.add_argument("--L", type=_positive_int, default=2)
    v.add_argument("--B", type=_positive_int, default=500)
    v.add_argument("--alpha", type=float, default=0.05)
    v.add_argument("--min-tau", type=float, default=MIN_TAU, help="drop quotes with shorter maturity (years, ACT/365)")
    v.add_argument("--grid-size", type=_positive_int, default=500)
    v.add_argument("--eigenfunctions-prefix", help="write PREFIX_<group>.csv grid dumps")
    v.add_argument("--include-functions", action="store_true")
    v.set_defaults(func=cmd_iv)

    y = sub.add_parser("iv-synth", parents=[common], help="write synthetic option quotes to CSV")
    y.add_argument("--days", type=_positive_int, default=60)
    y.set_defaults(func=cmd_iv_synth)
    return p


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc).replace("\n", " "), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.seed is None and args.command != "simulate":
            args.seed = 0  # a study file may carry its own seed
        if args.command == "iv-synth" and not args.output:
            raise ValidationError("iv-synth needs --output for the quote CSV")
        if getattr(args, "alpha", 0.5) is not None and not 0 < getattr(args, "alpha", 0.5) < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        result = args.func(args)
        _emit(result, None if args.command == "iv-synth" else args.output)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ValidationError, OSError) as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
