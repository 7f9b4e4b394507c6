"""Command line front end.

Usage: semg <experiment> [--config PATH] [--seed N] [--out DIR]
       [section.key=value ...]

Exit codes: 0 success, 2 configuration problem, 3 missing artifact,
4 numeric failure.
"""

import argparse
import sys

from .errors import SemgError
from .experiments import EXPERIMENTS, run_experiment

__all__ = ["main"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semg",
        description="UAV spectrum-map estimation experiments",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override run seed")
    parser.add_argument("--out", default=None,
                        help="output root (default $SEMG_OUT or ./semg-runs)")
    parser.add_argument("overrides", nargs="*", metavar="key=value",
                        help="flat config overrides, e.g. diffusion.train_steps=100")
    return parser


def main(argv=None):
    # parse_known_args lets overrides appear before or after the options.
    args, extra = build_parser().parse_known_args(argv)
    args.overrides = list(args.overrides) + list(extra)
    for item in args.overrides:
        if "=" not in item or item.startswith("-"):
            build_parser().error(f"unrecognized argument: {item}")
    try:
        out_dir = run_experiment(
            args.experiment,
            config_path=args.config,
            overrides=args.overrides,
            seed=args.seed,
            out_root=args.out,
        )
    except SemgError as exc:
        print(f"semg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything unforeseen: still one line, code 1
        print(f"semg: internal error: {exc}", file=sys.stderr)
        return 1
    print(out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
