"""Command-line entry point.

Subcommands mirror the pipeline stages; every invocation needs a spec file
(report needs only the run directory). Exit codes: 0 success, 2 spec error,
3 I/O error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (SpecError, cmd_characterize, cmd_report, cmd_simulate,
                      cmd_train_offline, load_spec)


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--spec", required=True, help="experiment spec YAML")
    sp.add_argument("--out", required=True, help="run output directory")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the spec's experiment seed")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ilgov",
        description="trace-driven runtime-configuration experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("characterize", help="write full-grid sweep traces")
    _add_common(sp)
    sp.add_argument("--include-eval", action="store_true",
                    help="also trace evaluation workloads")

    sp = sub.add_parser("train-offline",
                        help="fit models and train the policy from traces")
    _add_common(sp)
    sp.add_argument("--no-offline", action="store_true",
                    help="emit a randomly initialized policy and zero models")

    sp = sub.add_parser("simulate",
                        help="run controllers over the evaluation stream")
    _add_common(sp)
    sp.add_argument("--controllers", default=None,
                    help="comma-separated controller subset")
    sp.add_argument("--budget", type=int, default=None,
                    help="override the online search budget")
    sp.add_argument("--beta", type=float, default=None,
                    help="override the reward exponent")

    sp = sub.add_parser("report", help="consolidate a finished run directory")
    sp.add_argument("--out", required=True, help="run output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            cmd_report(args.out)
            return 0
        spec = load_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
        if args.command == "characterize":
            cmd_characterize(spec, args.out, include_eval=args.include_eval)
        elif args.command == "train-offline":
            cmd_train_offline(spec, args.out, no_offline=args.no_offline)
        elif args.command == "simulate":
            if args.budget is not None:
                spec.budget = args.budget
            if args.beta is not None:
                spec.beta = args.beta
            controllers = None
            if args.controllers is not None:
                controllers = tuple(
                    c.strip() for c in args.controllers.split(",") if c.strip())
            cmd_simulate(spec, args.out, controllers=controllers)
        return 0
    except SpecError as err:
        print(f"spec error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3
    except (FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 4
    except ValueError as err:
        print(f"input error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
