"""Command-line entry point: ``imlab <subcommand> --config FILE [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .config import KINDS, ConfigError, load_config, validate
from .constants import load_constants
from .harness import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, run

SUBCOMMANDS = KINDS + ("validate",)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imlab", description="Radial cubic wave / I-method experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for multi-run experiments")
        sp.add_argument("--seed-override", type=_u64, help="replace data.seed")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.out, args.seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        diags = validate(cfg)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_OK

    if cfg.kind != args.command:
        # the subcommand picks the experiment; a mismatching file is almost certainly a mistake
        print(f"config error: {args.config} describes a {cfg.kind!r} experiment, not {args.command!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        consts = load_constants()
    except (OSError, ValueError) as exc:
        print(f"config error: constants: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = run(cfg, jobs=args.jobs, constants=consts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if outcome.status == EXIT_NUMERICAL:
        print(f"numerical failure: {outcome.failure['message']}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {len(outcome.artifacts)} artifacts to {outcome.directory}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
