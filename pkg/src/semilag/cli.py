"""Command line entry point for convergence studies."""

from __future__ import annotations

import argparse
import logging
import sys

from .study import ConfigError, parse_config, parse_config_text, run_study

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="semilag-study",
        description="Run a semi-Lagrangian convergence study and write NbM,Err,Rate,Time as CSV.",
    )
    p.add_argument("--config", help="study file with 'key = value' lines")
    p.add_argument("--workers", type=int, help="number of domain-decomposition blocks")
    p.add_argument("--out", help="CSV output path")
    p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log each run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = list(args.override)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.out is not None:
        overrides.append(f"out={args.out}")
    try:
        if args.config:
            config = parse_config(args.config, overrides)
        else:
            config = parse_config_text("", "<command line>", overrides)
    except (ConfigError, OSError) as exc:
        print(f"semilag-study: {exc}", file=sys.stderr)
        return 2
    print(f"{config.scheme.label}, test case {config.test}, {config.steps} steps", flush=True)
    report = run_study(config, stream=sys.stdout)
    print(report.summary())
    if config.out is None:
        sys.stdout.write(report.to_csv())
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
