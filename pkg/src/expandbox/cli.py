"""Command-line entry point: ``expandbox <command> --config FILE [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import experiments
from .classical import CollisionError
from .config import ConfigError, parse_config
from .evolver import IntegrationError
from .oracle import OracleError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ORACLE = 3

COMMANDS = {
    "evolve": "time series of <E>, E_adiab, E_1 and populations for each trajectory and initial level",
    "sweep-tf": "final energy versus expansion time tf",
    "classical": "event-driven classical ensemble between the fixed wall and the mirror",
    "tg": "Tonks-Girardeau energy as a sum of single-particle evolutions",
    "bounds": "stopping, adiabaticity, ground-level and minimal-work diagnostics",
    "check-oracle": "compare the evolver with the exact-mode and grid oracles",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expandbox",
                                     description="Cooling a particle in a box with a moving wall.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--dimensionless", action="store_true",
                       help="add dimensionless twin columns to record files")
        p.add_argument("--jobs", type=int, default=None, help="worker processes for independent runs")
        p.add_argument("--seed", type=int, default=None, help="override the classical ensemble seed")
    return parser


def _dispatch(args, cfg):
    if args.command == "evolve":
        return experiments.run_evolve(cfg, args.out, args.jobs)
    if args.command == "sweep-tf":
        return experiments.run_sweep(cfg, args.out, args.jobs)
    if args.command == "classical":
        return experiments.run_classical(cfg, args.out, args.seed)
    if args.command == "tg":
        return experiments.run_tg(cfg, args.out, args.jobs)
    if args.command == "bounds":
        return experiments.run_bounds(cfg, args.out, args.jobs)
    return experiments.check_oracle(cfg, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = parse_config(args.config)
        if args.dimensionless:
            cfg = replace(cfg, dimensionless=True)
        outcome = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationError, OracleError, CollisionError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for message in outcome.messages:
        print(f"warning: {message}", file=sys.stderr)
    for name in outcome.files:
        print(outcome.out_dir / name)
    if not outcome.ok:
        return EXIT_ORACLE if args.command == "check-oracle" else EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
