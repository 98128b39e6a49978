"""Command-line interface: scenario execution and the acceptance suite.

Subcommands: ``simulate``, ``gait-search``, ``design-sweep``, ``cot``,
``check``.  Exit codes: 0 success, 1 acceptance-check failure, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError, EmptyRun, SpringhopError
from .scenario import emit_report, run_check, run_gait_search, run_scenario

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser):
    parser.add_argument("config", nargs="?", help="scenario config file")
    parser.add_argument("--out-dir", default="out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="recorded in the report; runs are deterministic")
    parser.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="springhop",
        description="Hybrid hopping simulation and controller synthesis")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run a hop/push/terrain scenario from a config file"),
        ("gait-search", "identify a periodic orbit and write a gait file"),
        ("design-sweep", "stiffness/weight/TWR design tables"),
        ("cot", "hopping vs flying cost-of-transport comparison"),
        ("check", "run the full acceptance suite (twice, for determinism)"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    return parser


def _load_config(args, required: bool = True) -> dict:
    if args.config is None:
        if required:
            raise ConfigError(f"{args.command} requires a config file")
        return {}
    return cfgmod.load(args.config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out_dir)
    try:
        if args.command == "check":
            code, _ = run_check(out_dir, quiet=args.quiet)
            return code
        cfg = _load_config(args, required=args.command != "design-sweep"
                           and args.command != "cot")
        if args.command == "simulate":
            report = run_scenario(cfg, out_dir)
        elif args.command == "gait-search":
            _, report = run_gait_search(cfg, out_dir)
        elif args.command == "design-sweep":
            cfg.setdefault("kind", "design-sweep")
            report = run_scenario(cfg, out_dir)
        elif args.command == "cot":
            cfg.setdefault("kind", "cot")
            report = run_scenario(cfg, out_dir)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command}")
        code = emit_report([report], out_dir)
        if not args.quiet:
            print(report.to_text())
        return code
    except (ConfigError, EmptyRun) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpringhopError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
