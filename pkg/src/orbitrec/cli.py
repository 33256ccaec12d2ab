"""Command-line interface.

Subcommands: gen-data, fit, landscape, fig5, bias-metrics, orbit-export,
selftest, harmonics-selftest.  Every experiment command takes a TOML or
JSON config via --config; --out overrides the output directory and
--threads the worker pool size.  Exit codes: 0 ok, 1 usage error,
2 numerical failure, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from . import selftest

USAGE_ERROR, NUMERICAL_ERROR, SELFTEST_ERROR = 1, 2, 3


def _add_common(parser):
    parser.add_argument("--config", required=True, help="TOML or JSON config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, help="worker pool size")
    parser.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )


def _load(args) -> ex.ExperimentConfig:
    config = ex.load_config(args.config)
    if args.out:
        config.out_dir = args.out
    if args.threads:
        config.threads = args.threads
    if args.no_figures:
        config.figures = False
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitrec",
        description="signal recovery from randomly rotated, projected, noisy data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write datasets and a checksum manifest")
    _add_common(p)

    p = sub.add_parser("fit", help="fit every dataset and summarize orbit errors")
    _add_common(p)
    p.add_argument(
        "--estimator", choices=("em", "joint"), default="em", help="fitting method"
    )
    p.add_argument("--data-dir", help="directory holding datasets (default: out dir)")

    p = sub.add_parser("landscape", help="population objective over a signal grid")
    _add_common(p)

    p = sub.add_parser("fig5", help="relative-error curves for seven data laws")
    _add_common(p)

    p = sub.add_parser("bias-metrics", help="Hausdorff distances of misspecified fits")
    _add_common(p)

    p = sub.add_parser("orbit-export", help="dump a projected orbit cloud to CSV")
    _add_common(p)

    p = sub.add_parser("selftest", help="run all verification suites")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser(
        "harmonics-selftest", help="run only the special-function identity suite"
    )
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code else 0

    if args.command == "selftest":
        rows = selftest.run_all(args.seed)
        print(selftest.render(rows))
        return 0 if all(r[1] for r in rows) else SELFTEST_ERROR
    if args.command == "harmonics-selftest":
        rows = selftest.harmonics_suite(args.seed)
        print(selftest.render(rows))
        return 0 if all(r[1] for r in rows) else SELFTEST_ERROR

    try:
        config = _load(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    try:
        if args.command == "gen-data":
            out = ex.cmd_gen_data(config)
        elif args.command == "fit":
            out = ex.cmd_fit(config, args.estimator, args.data_dir)
        elif args.command == "landscape":
            out = ex.cmd_landscape(config)
        elif args.command == "fig5":
            out = ex.cmd_fig5(config)
        elif args.command == "bias-metrics":
            out = ex.cmd_bias_metrics(config)
        elif args.command == "orbit-export":
            out = ex.cmd_orbit_export(config)
        else:  # pragma: no cover
            return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
