"""Command line entry point: ``alpertlab <suite> [--config FILE] [--seed N] [--out-dir DIR]``."""

import argparse
import sys
from pathlib import Path

from .harness import SUITES, ConfigError, load_config, run_suite


def build_parser():
    parser = argparse.ArgumentParser(prog="alpertlab",
                                     description="Numerical experiments with smooth Alpert frames.")
    sub = parser.add_subparsers(dest="suite", required=True)
    for name, fn in SUITES.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out-dir", type=Path, help="output directory (default <out_dir>/<suite>)")
        p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed)
        run = run_suite(args.suite, cfg, args.out_dir, figures=not args.no_figures)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for g in run.gates:
        print(f"{'PASS' if g.passed else 'FAIL'} {g.name}: {g.detail}")
    out = args.out_dir if args.out_dir is not None else Path(cfg.out_dir) / args.suite
    print(f"{args.suite}: {'PASS' if run.passed else 'FAIL'} ({run.seconds:.1f} s) -> {out}")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
