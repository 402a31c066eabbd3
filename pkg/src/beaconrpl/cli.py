"""Command line front end: ``run``, ``sweep``, ``analyze`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .engine import ScenarioError
from .scenario import default_scenario, load_config, parse_seeds

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


def _scan_value(text: str):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"--scan: expected 'auto' or ticks, got {text!r}") from None


def _seed_list(text: str) -> list[int]:
    try:
        return parse_seeds(text)
    except ValueError:
        raise ScenarioError(f"--seeds: expected a count or a comma list, got {text!r}") from None


def build_scenario(args):
    """Config file (or the default chain) with command-line overrides applied."""
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ScenarioError(f"--config: no such file {args.config!r}")
        scenario = load_config(path)
    else:
        scenario = default_scenario()
    changes = {}
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    if args.bo is not None:
        changes["bo"] = args.bo
    if args.so is not None:
        changes["so"] = args.so
    if args.sbp_size is not None:
        changes["sbp_size_bytes"] = args.sbp_size
    if args.scan is not None:
        changes["scan_duration"] = _scan_value(args.scan)
    if args.seeds is not None:
        changes["seeds"] = _seed_list(args.seeds)
    if args.steady_ticks is not None:
        changes["steady_ticks"] = args.steady_ticks
    scenario = scenario.with_(**changes).validate()
    for warning in scenario.warnings():
        print(f"warning: {warning}", file=sys.stderr)
    return scenario


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value scenario file")
    p.add_argument("--scheme", choices=("proposed", "sbp"))
    p.add_argument("--bo", type=int, metavar="N")
    p.add_argument("--so", type=int, metavar="N")
    p.add_argument("--sbp-size", type=int, metavar="N", help="SBP frame size in MAC bytes")
    p.add_argument("--scan", metavar="auto|TICKS", help="scan duration when BO is unknown")
    p.add_argument("--seeds", metavar="N|LIST", help="count (seeds 1..N) or comma list")
    p.add_argument("--steady-ticks", type=int, metavar="N", help="ticks to keep running after convergence")
    p.add_argument("--trace", action="store_true", help="write per-seed event traces")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: ./out)")


def _print_aggregate(rows) -> None:
    wanted = ("converged", "convergence_ticks", "overhead_bytes")
    for row in rows:
        if row["metric"] in wanted:
            lo, hi = row["ci_low"], row["ci_high"]
            ci = f" [{lo:.1f}, {hi:.1f}]" if lo != "" else ""
            print(f"{row['metric']}: mean={row['mean']:.6g}{ci} n={row['n']}")


def cmd_run(args) -> int:
    from .harness import run_scenario

    scenario = build_scenario(args)
    batch = run_scenario(scenario, args.out, trace=args.trace)
    _print_aggregate(batch.aggregate)
    print(f"outputs in {args.out}")
    if not batch.all_converged:
        print(f"not converged for seeds {','.join(map(str, batch.nonconverged))}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .harness import SweepError, parse_sweep, sweep

    if not args.sweep:
        raise ScenarioError("--sweep param=v1,v2,... is required")
    scenario = build_scenario(args)
    param, values = parse_sweep(args.sweep)
    try:
        res = sweep(scenario, param, values, args.out)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    failed = False
    for value, batch in res.batches.items():
        mean, lo, hi = batch.ci("convergence_ticks")
        ci = f" [{lo:.1f}, {hi:.1f}]" if lo is not None else ""
        print(f"{param}={value}: convergence_ticks mean={mean:.6g}{ci}; "
              f"overhead_bytes mean={batch.mean('overhead_bytes'):.6g}")
        if not batch.all_converged:
            failed = True
            print(f"{param}={value}: not converged for seeds {batch.nonconverged}", file=sys.stderr)
    print(f"outputs in {args.out}")
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def _number_list(text: str, kind, flag: str) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"{flag}: cannot parse {text!r}") from None


def cmd_analyze(args) -> int:
    from .analysis import ANALYZE_COLUMNS, analyze_table
    from .mac154 import SuperframeConfig

    try:
        sf = SuperframeConfig(args.bo, args.so)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if args.imin == "auto":
        imins = [sf.bi - sf.sd]
    else:
        imins = _number_list(args.imin, float, "--imin")
    ps = _number_list(args.p, float, "--p")
    imaxes = _number_list(args.imax, int, "--imax")
    if args.samples < 1:
        raise ScenarioError("--samples must be >= 1")
    try:
        rows = analyze_table(ps, imaxes, imins, sf.bi, args.samples, args.seed)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "analyze.csv", "w", newline="")
    else:
        fh = sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ANALYZE_COLUMNS)
    for row in rows:
        writer.writerow([row[c] for c in ANALYZE_COLUMNS])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    from .acceptance import run_all

    numbers = None
    if args.only:
        numbers = set(_number_list(args.only, int, "--only"))
    results = run_all(numbers, report=lambda line: print(line, flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconrpl",
        description="Beacon-enabled 802.15.4 cluster-tree with RPL discovery: simulator and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario over its seeds")
    _add_scenario_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="repeat a scenario over values of one parameter")
    _add_scenario_flags(sw)
    sw.add_argument("--sweep", metavar="param=v1,v2,...", required=False,
                    help="bo, scan_duration or sbp_size_bytes")
    sw.set_defaults(func=cmd_sweep)

    an = sub.add_parser("analyze", help="closed-form delay against Monte Carlo")
    an.add_argument("--p", default="0.1,0.3,0.5,0.7,0.9", help="reset probabilities")
    an.add_argument("--imax", default="0,2,4,8", help="doubling counts")
    an.add_argument("--imin", default="auto", help="'auto' (BI - SD) or tick list")
    an.add_argument("--bo", type=int, default=5)
    an.add_argument("--so", type=int, default=2)
    an.add_argument("--samples", type=int, default=100_000)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--out", metavar="DIR", help="write analyze.csv here instead of stdout")
    an.set_defaults(func=cmd_analyze)

    va = sub.add_parser("validate", help="run the acceptance criteria")
    va.add_argument("--only", metavar="LIST", help="comma list of criterion numbers")
    va.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
