"""Command-line front end.

Usage: ``flowabs {validate,abstract,check,verify,plot} CONFIG [--seed N] [--out DIR]
[--jobs N] [--quiet]``.

Exit codes: 0 pass, 2 config error, 3 construction or check failure,
4 possibly unsafe, 5 precondition (no over-approximation), 6 unsupported
dimension. The output directory defaults to ``$FLOWABS_OUT``, then the
config's ``output`` key, then ``flowabs-out``.
"""
import argparse
import os
import sys
import warnings

from .config import load_config
from .exceptions import (AbstractionError, ConfigError, NotOverApproximation,
                         UnsupportedDimension)
from .expr import ExpressionError
from .runner import COMMANDS

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE, EXIT_UNSAFE, EXIT_PRECONDITION, EXIT_UNSUPPORTED = \
    0, 2, 3, 4, 5, 6
OUT_ENV = "FLOWABS_OUT"


def build_parser():
    parser = argparse.ArgumentParser(prog="flowabs",
                                     description="Finite abstractions of smooth flows.")
    parser.add_argument("command", choices=["validate"] + sorted(COMMANDS))
    parser.add_argument("config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker count (results never depend on it)")
    parser.add_argument("-q", "--quiet", action="store_true", help="print nothing on success")
    return parser


def output_dir(args, cfg):
    return args.out or os.environ.get(OUT_ENV) or cfg.get("output") or "flowabs-out"


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    say = (lambda *a: None) if args.quiet else print
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        for m in exc.messages:
            print(f"error: {m}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        say(f"{args.config}: valid")
        return EXIT_OK
    with warnings.catch_warnings():
        if args.quiet:
            warnings.simplefilter("ignore")
        try:
            report = COMMANDS[args.command](cfg, output_dir(args, cfg))
        except NotOverApproximation as exc:
            print(f"error: NotOverApproximation: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        except UnsupportedDimension as exc:
            print(f"error: UnsupportedDimension: {exc}", file=sys.stderr)
            return EXIT_UNSUPPORTED
        except AbstractionError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        except (ExpressionError, ValueError) as exc:
            print(f"error: config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    say(report.text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
