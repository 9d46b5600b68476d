"""Command-line interface: ``perfect-stop {table1,table2,table3,verify,apply}``.

Every command writes its resolved configuration next to the results, as a
``config`` object in JSON or a leading ``# config: {...}`` line in CSV, so a
run can be repeated exactly. Exit codes:

    0  success
    1  verification found a counterexample
    2  usage error (bad flags, empty lists)
    3  invalid parameter, domain or input data
    4  solver or series failure
    5  I/O error
    6  enumeration size cap exceeded
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .errors import AccuracyError, DomainError, ParameterError, ParseError, SizeError, SolverError
from .forecast import from_dict as forecast_from_dict
from .montecarlo import TABLE_N_PATHS, table1, table2
from .oracle import MAX_BRANCHING, verify_random_trees
from .paths import drawdown, read_csv
from .special import solve_zq
from .stopping import estimated_regret, perfect_stop, realized_regret

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_SOLVER = 4
EXIT_IO = 5
EXIT_SIZE = 6


def _finite(x):
    """JSON has no infinity; unbounded values (e.g. a CI from one path) become null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _finite(obj)


def render(config: dict, rows: list, fmt: str, paper_rounding: bool = False, extra: dict | None = None) -> str:
    """Format ``rows`` (a list of flat dicts) with ``config`` as metadata.

    Parameters
    ----------
    config : dict
        Resolved command configuration, echoed verbatim.
    rows : list of dict
        Table rows sharing the same keys.
    fmt : {"csv", "json"}
    paper_rounding : bool
        Round CSV numbers to two decimals. JSON is always full precision.
    extra : dict, optional
        Additional top-level JSON fields (ignored for CSV).
    """
    if fmt == "json":
        doc = {"config": config, "rows": rows}
        if extra:
            doc.update(extra)
        return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_clean(config), sort_keys=True, allow_nan=False) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            if paper_rounding:
                row = {k: (f"{v:.2f}" if isinstance(v, float) else v) for k, v in row.items()}
            else:
                row = {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
            writer.writerow(row)
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _common(cfg: dict, args) -> dict:
    cfg.update({"format": args.format, "out": args.out, "version": __version__})
    return cfg


def cmd_table1(args) -> int:
    cfg = _common({
        "command": "table1", "lambdas": args.lambdas, "p": args.p, "T": args.T,
        "n_paths": args.n_paths, "seed": args.seed, "forecast": {"kind": "lipschitz", "L2": 1.0},
        "u": args.T / 2, "paper_rounding": args.paper_rounding,
    }, args)
    rows = table1(args.lambdas, n_paths=args.n_paths, seed=args.seed, T=args.T, p=args.p)
    emit(render(cfg, rows, args.format, args.paper_rounding), args.out)
    return EXIT_OK


def cmd_table2(args) -> int:
    cfg = _common({
        "command": "table2", "ps": args.ps, "lambda": args.lam, "T": args.T,
        "n_paths": args.n_paths, "seed": args.seed, "forecast": {"kind": "lipschitz", "L2": 1.0},
        "paper_rounding": args.paper_rounding,
    }, args)
    rows = table2(args.ps, lam=args.lam, n_paths=args.n_paths, seed=args.seed, T=args.T)
    emit(render(cfg, rows, args.format, args.paper_rounding), args.out)
    return EXIT_OK


def cmd_table3(args) -> int:
    cfg = _common({"command": "table3", "qs": args.qs, "paper_rounding": args.paper_rounding}, args)
    rows = []
    for q in args.qs:
        sol = solve_zq(q)
        rows.append({"q": sol.q, "z_q": sol.z_q, "delta": sol.delta, "residual": sol.residual})
    emit(render(cfg, rows, args.format, args.paper_rounding), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _common({
        "command": "verify", "count": args.count, "max_depth": args.max_depth,
        "max_branching": args.max_branching, "seed": args.seed,
    }, args)
    results = verify_random_trees(args.count, args.max_depth, seed=args.seed,
                                  max_branching=args.max_branching)
    rows = []
    failures = []
    for i, (tree, rep) in enumerate(results):
        rows.append({
            "tree": i, "depth": len(tree.level_times) - 1, "n_nodes": rep.n_nodes,
            "n_rules": rep.n_rules, "passed": rep.passed,
            "n_counterexamples": len(rep.counterexamples),
        })
        if not rep.passed:
            failures.append({"tree": i, "report": rep.to_dict(), "tree_json": tree.to_dict()})
    summary = {"n_trees": len(rows), "n_passed": sum(r["passed"] for r in rows), "failures": failures}
    emit(render(cfg, rows, args.format, extra={"summary": summary}), args.out)
    if args.format == "csv":
        sys.stderr.write(f"{summary['n_passed']}/{summary['n_trees']} trees passed\n")
    return EXIT_OK if not failures else EXIT_FAILED


def _load_forecast(text: str, horizon: float):
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"forecast is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ParameterError("forecast JSON must be an object")
    if d.get("kind") != "piecewise_linear":
        d.setdefault("T", horizon)
    return forecast_from_dict(d)


def cmd_apply(args) -> int:
    path = read_csv(args.csv_path)
    forecast = _load_forecast(args.forecast, path.horizon)
    cfg = _common({
        "command": "apply", "csv_path": args.csv_path, "forecast": forecast.to_dict(), "tol": args.tol,
    }, args)
    res = perfect_stop(path, forecast, tol=args.tol)
    row = res.to_dict()
    row["estimated_regret"] = estimated_regret(path, res.stop_time, forecast)
    row["realized_regret"] = realized_regret(path, res.stop_time)
    row["drawdown_at_stop"] = drawdown(path, res.stop_time)
    emit(render(cfg, [row], args.format), args.out)
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfect-stop",
        description="Perfect stopping rules: simulation tables, optimality checks and rule application.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def io_flags(p, rounding=True):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", metavar="PATH", help="write here instead of stdout")
        if rounding:
            p.add_argument("--paper-rounding", action="store_true",
                           help="round CSV numbers to two decimals")

    p = sub.add_parser("table1", help="perfect rule vs u = T/2 across jump rates (p = 1/2)")
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.1, 1, 10, 50, 100, 1000])
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--n-paths", type=_positive_int, default=TABLE_N_PATHS)
    p.add_argument("--seed", type=_seed, default=0)
    io_flags(p)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("table2", help="perfect rule vs u in {0, T/2, T} across up-probabilities")
    p.add_argument("--ps", type=float, nargs="+", default=[0.2, 0.4, 0.6, 0.8])
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--n-paths", type=_positive_int, default=TABLE_N_PATHS)
    p.add_argument("--seed", type=_seed, default=0)
    io_flags(p)
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("table3", help="q-mean thresholds z_q and quantile levels delta")
    p.add_argument("--qs", type=float, nargs="+", default=[1.1, 2, 4, 6, 8, 10])
    io_flags(p)
    p.set_defaults(func=cmd_table3)

    p = sub.add_parser("verify", help="exhaustively verify the perfect rule on random scenario trees")
    p.add_argument("--count", type=_positive_int, default=100)
    p.add_argument("--max-depth", type=_positive_int, default=4)
    p.add_argument("--max-branching", type=_positive_int, default=MAX_BRANCHING)
    p.add_argument("--seed", type=_seed, default=0)
    io_flags(p, rounding=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("apply", help="apply the perfect rule to a price CSV (header t,price)")
    p.add_argument("csv_path")
    p.add_argument("--forecast", required=True,
                   help='forecast JSON or @file, e.g. \'{"kind": "lipschitz", "L2": 1}\'; '
                        "horizon defaults to the last CSV time")
    p.add_argument("--tol", type=float, default=1e-10)
    io_flags(p, rounding=False)
    p.set_defaults(format="json", func=cmd_apply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SizeError as exc:
        return _fail(EXIT_SIZE, "size error", exc)
    except ParseError as exc:
        return _fail(EXIT_INVALID, "parse error", exc)
    except (ParameterError, DomainError) as exc:
        return _fail(EXIT_INVALID, "invalid input", exc)
    except (SolverError, AccuracyError) as exc:
        return _fail(EXIT_SOLVER, "solver error", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "I/O error", exc)


def _fail(code, kind, exc):
    sys.stderr.write(f"perfect-stop: {kind}: {exc}\n")
    diag = getattr(exc, "diagnostics", None)
    if diag:
        sys.stderr.write(f"diagnostics: {json.dumps(_clean(diag))}\n")
    return code

if __name__ == "__main__":
    sys.exit(main())
