"""Command-line entry point: ``cfaging {simulate,detequiv,compare,sweep}``."""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .scenario import ConfigError


def _probe_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _common(p: argparse.ArgumentParser, averaging: bool = True) -> None:
    p.add_argument("--config", help="JSON scenario file (default: preset for --scale)")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for CSV/JSON output")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--probe-times", type=_probe_list, default=None, help="comma-separated time indices")
    if averaging:
        p.add_argument("--drops", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfaging", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo run of one system")
    _common(p)
    p.add_argument("--system", choices=("mc", "cellular", "smallcell"), default="mc")

    p = sub.add_parser("detequiv", help="large-system SINR only")
    _common(p)

    p = sub.add_parser("compare", help="Monte Carlo vs large-system SINR")
    _common(p)
    p.add_argument("--tolerance-db", type=float, default=0.5)

    p = sub.add_parser("sweep", help="figure presets")
    p.add_argument("figure", choices=sorted(harness.EXPERIMENTS))
    _common(p)
    return parser


def _config(args):
    return harness.load_config(args.config) if args.config else harness.preset(args.scale)


def _averaging(args):
    return harness._averaging(args.scale, args.drops, args.trials)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = "config"
    try:
        cfg = _config(args)
        if args.command == "sweep":
            stage = args.figure
            kwargs = dict(scale=args.scale, seed=args.seed, threads=args.threads,
                          drops=args.drops, trials=args.trials)
            if args.figure != "fig3":
                kwargs["probe_times"] = args.probe_times
            bundle = harness.EXPERIMENTS[args.figure](cfg, **kwargs)
        elif args.command == "compare":
            stage = "compare"
            drops, trials = _averaging(args)
            mc = harness.run_system("mc", cfg, drops, trials, args.probe_times, args.seed, args.threads)
            de = harness.run_system("detequiv", cfg, drops, 0, args.probe_times, args.seed, args.threads)
            report = harness.compare(mc, de, args.tolerance_db)
            print(json.dumps(report, indent=2))
            bundle = {"compare_mc": mc, "compare_detequiv": de}
            if args.out:
                harness.emit(bundle, args.out)
            return 0 if report["ok"] else 3
        else:
            stage = args.command
            system = "detequiv" if args.command == "detequiv" else args.system
            drops, trials = _averaging(args)
            res = harness.run_system(system, cfg, drops, trials, args.probe_times, args.seed, args.threads)
            bundle = {f"{system}": res}
        for line in harness.summary_lines(bundle):
            print(line)
        if args.out:
            stage = "emit"
            harness.emit(bundle, args.out)
        return 0
    except (ConfigError, harness.HarnessError, RuntimeError, ValueError, OSError) as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
