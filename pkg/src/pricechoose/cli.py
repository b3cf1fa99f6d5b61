"""Command line harness: validate scenarios, run experiments, emit reports.

Exit codes: 0 all invariant checks pass, 2 validation failure, 3 at least
one invariant violated.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .config import load_scenario
from .errors import EngineError, ValidationError
from .report import emit_report, run_experiment


def _resolve_scenario(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = name_or_path.replace("-", "_")
    if not stem.endswith(".json"):
        stem += ".json"
    ref = resources.files("pricechoose") / "scenarios" / stem
    if ref.is_file():
        return Path(str(ref))
    raise ValidationError([f"scenario {name_or_path!r} is neither a file nor a "
                           "bundled scenario name"])


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", required=False,
                     help="scenario file path or bundled scenario name")
    sub.add_argument("--resolution", type=int, default=None)
    sub.add_argument("--mode", choices=["exact", "perturbed"], default=None)
    sub.add_argument("--epsilon", type=float, default=None)
    sub.add_argument("--iota", type=float, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None,
                     help="output directory (default: the scenario's output.dir)")
    sub.add_argument("--format", choices=["structured", "tabular", "both"],
                     default=None)


def _load(args) -> object:
    if args.scenario is None:
        raise ValidationError(["--scenario is required for this command"])
    config = load_scenario(_resolve_scenario(args.scenario))
    return config.with_overrides(resolution=args.resolution, mode=args.mode,
                                 epsilon=args.epsilon, iota=args.iota,
                                 seed=args.seed)


def _print_summary(report: dict) -> None:
    print(f"scenario: {report['scenario']['name']}")
    print(f"grid: {report['grid']['n_points']} points "
          f"(resolution {report['grid']['resolution']})")
    print(f"welfare maximum: {report['welfare']['value']!r} "
          f"via {report['welfare']['method']}")
    if report.get("closed_form"):
        cf = report["closed_form"]
        print(f"closed form: value {cf['value']!r}, lam {cf['lam']!r}, "
              f"grid gap {cf['grid_value_gap']:.3g}")
    print("agent  avg           underbar_avg  mechanism_g   final")
    for row in report["agents"]:
        def fmt(v):
            return "-" if v is None else f"{v:.6f}"
        print(f"{row['agent']:>5}  {fmt(row['avg']):>12}  "
              f"{fmt(row['underbar_avg']):>12}  "
              f"{fmt(row['mechanism_payoff']):>12}  {fmt(row['final_payoff']):>12}")
    failures = [c for c in report["invariants"] if not c["passed"]]
    if failures:
        for c in failures:
            print(f"FAIL {c['name']}: {c['detail']}")
    print(f"invariant checks: {len(report['invariants']) - len(failures)}"
          f"/{len(report['invariants'])} passed")


def _emit(report: dict, args, config) -> None:
    fmt = args.format or config.out_format
    formats = ("structured", "tabular") if fmt == "both" else (fmt,)
    out = args.out if args.out is not None else config.out_dir
    paths = emit_report(report, out, formats)
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}")


def _cmd_validate(args) -> int:
    _load(args)
    print("scenario OK")
    return 0


def _cmd_run(args) -> int:
    config = _load(args)
    report = run_experiment(config)
    _emit(report, args, config)
    _print_summary(report)
    return 0 if report["all_invariants_pass"] else 3


def _cmd_audit(args) -> int:
    config = _load(args)
    report = run_experiment(config, include_auction=False)
    _emit(report, args, config)
    _print_summary(report)
    return 0 if report["all_invariants_pass"] else 3


def _cmd_bench(args) -> int:
    if args.scenario is None:
        args.scenario = "hurricane-three-farmers"
    config = _load(args)
    report = run_experiment(config)
    if not report.get("closed_form"):
        print("bench needs an all-entropic scenario with a closed form",
              file=sys.stderr)
        return 2
    _emit(report, args, config)
    _print_summary(report)
    cf = report["closed_form"]
    print(f"bench: closed-form shares {cf['shares'][0]}")
    grid_shares = report["welfare"]["shares"]
    if grid_shares is not None:
        w = cf["shares"][0]
        gap = max(abs(a - b) for row in grid_shares for a, b in zip(row, w))
        print(f"bench: max share gap vs closed form {gap:.3g}")
    return 0 if report["all_invariants_pass"] else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pricechoose",
        description="Price-and-choose risk sharing engine and auditor.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("validate", _cmd_validate),
                     ("audit", _cmd_audit), ("bench", _cmd_bench)):
        sub = subs.add_parser(name)
        _add_common(sub)
        sub.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        for e in exc.errors:
            print(f"validation error: {e}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
