"""Command-line entry point.

    cablescan sense|scan1d|scan2d|sweep|calibrate [--config F] [--out D]
              [--seed N] [--quiet]

Exit codes: 0 success, 2 configuration error, 3 solver failure or aborted run.
"""

from __future__ import annotations

import argparse
import sys

from .config import build_config, load_config_file
from .errors import CablescanError, ConfigurationError
from .experiments import execute

_COMMANDS = {
    "sense": "force-sense",
    "scan1d": "scan-1dof",
    "scan2d": "scan-2dof",
    "sweep": "force-sweep",
    "calibrate": "calibrate",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cablescan",
        description="Quasi-static cable-driven probe simulator and "
                    "autonomous scanning controller")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--quiet", action="store_true",
                       help="suppress summary printing")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        file_data = load_config_file(args.config) if args.config else {}
        cfg = build_config(_COMMANDS[args.command], file_data,
                           seed=args.seed, out_dir=args.out,
                           quiet=args.quiet or None)
        result = execute(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CablescanError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3

    summary = result["summary"]
    if not cfg.run.quiet:
        print(f"scenario: {cfg.scenario}  seed: {cfg.run.seed}")
        for key in sorted(summary):
            value = summary[key]
            if isinstance(value, (int, float, bool, str)):
                print(f"  {key}: {value}")
        print(f"trace:   {result['trace_path']}")
        print(f"summary: {result['summary_path']}")
    if summary.get("abort_reason"):
        print(f"run aborted: {summary['abort_reason']}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
