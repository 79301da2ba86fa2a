"""Command line entry point: ``loopfloer <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigInvalid, LoopFloerError
from .config import builtin_scenarios, load_scenario
from .runner import emit_report, run

COMMANDS = ("orbits", "heat-connect", "floer-lift", "count-check", "homology", "estimates", "sweep")


def _eps_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty eps list")
    return vals


def build_parser():
    parser = argparse.ArgumentParser(prog="loopfloer", description="Loop-space heat flow and Floer laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="scenario YAML file")
        src.add_argument("--scenario", help=f"packaged scenario ({', '.join(builtin_scenarios())})")
        p.add_argument("--out", default="runs", help="run store directory (default: ./runs)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eps", type=_eps_list, default=None, help="comma separated eps values")
        p.add_argument("--stage", default=None, help="sub-stage (estimates: group; floer-lift: time-shift)")
        p.add_argument("--workers", type=int, default=1)
        if name == "homology":
            p.add_argument("--mode", action="append", choices=("heat", "floer"), default=None)
    rep = sub.add_parser("report")
    rep.add_argument("run_id")
    rep.add_argument("--out", default="runs")
    rep.add_argument("--format", choices=("json", "csv", "text"), default="json")
    rep.add_argument("--target", default=None, help="directory receiving the regenerated files")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            digests = emit_report(args.run_id, args.format, args.out, target=args.target)
            for name, dig in sorted(digests.items()):
                print(f"{dig}  {name}")
            return 0
        if args.config is None and args.scenario is None:
            raise ConfigInvalid("one of --config or --scenario is required")
        scenario = load_scenario(path=args.config, name=args.scenario)
        scenario = scenario.with_overrides(seed=args.seed, eps_list=args.eps)
        options = {"stage": args.stage}
        if args.command == "homology":
            options["modes"] = args.mode or ["heat", "floer"]
        run_id, record = run(args.command, scenario, args.out, options, workers=args.workers)
        print(run_id)
        for name, ok in sorted(record["summary"]["verdicts"].items()):
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        return 0
    except LoopFloerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
