"""Command-line front end for the experiment harness.

Subcommands: train, sweep-users, evaluate, validate-config.
Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError
from .harness import (SCHEMES, evaluate_checkpoint, load_config,
                      run_experiment, sweep_users)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def parse_counts(text: str) -> list[int]:
    """Accept '2..8' (inclusive range) or a comma list like '2,4,6'."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            counts = list(range(int(lo), int(hi) + 1))
        else:
            counts = [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise ConfigError(f"cannot parse counts '{text}': {exc}") from exc
    if not counts or any(n < 1 for n in counts):
        raise ConfigError(f"counts must be positive integers, got '{text}'")
    return counts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emslice",
        description="Train and evaluate emergent-communication slice allocation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the configured experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config's seed list with one seed")
    p_train.add_argument("--scheme", default=None,
                         help="run only this scheme")
    p_train.add_argument("--out", default=None, help="output directory")

    p_sweep = sub.add_parser("sweep-users",
                             help="train and test across device counts")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--counts", required=True,
                         help="e.g. 2..8 or 2,4,6")
    p_sweep.add_argument("--out", default=None)

    p_eval = sub.add_parser("evaluate", help="greedy-test a saved checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, required=True)

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("path")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            load_config(args.path)
            print(f"{args.path}: ok")
            return EXIT_OK

        if args.command == "train":
            config = load_config(args.config)
            if args.scheme is not None:
                if args.scheme not in SCHEMES:
                    raise ConfigError(
                        f"scheme '{args.scheme}' unknown; choose from {SCHEMES}")
                config.schemes = [args.scheme]
            if args.seed is not None:
                config.seeds = [args.seed]
            summary = run_experiment(config, out_dir=args.out)
            print(json.dumps(summary["schemes"], indent=2, sort_keys=True))
            if summary["failures"]:
                print(f"{len(summary['failures'])} cell(s) failed",
                      file=sys.stderr)
                return EXIT_RUNTIME
            return EXIT_OK

        if args.command == "sweep-users":
            config = load_config(args.config)
            counts = parse_counts(args.counts)
            rows = sweep_users(config, counts, out_dir=args.out)
            for row in rows:
                print(f"N={row.n_devices} {row.scheme} seed={row.seed}: "
                      f"success {row.test_normalized_success:.4f} "
                      f"({row.test_success_count:.1f}/episode)")
            return EXIT_OK

        if args.command == "evaluate":
            result = evaluate_checkpoint(args.checkpoint, args.episodes)
            print(json.dumps(result, indent=2, sort_keys=True))
            return EXIT_OK

        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
