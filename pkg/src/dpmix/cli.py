"""Command line front end.

Subcommands: exact | sample | verify-bounds | consistency-curve |
alpha-posterior.  Every subcommand takes --config PATH plus optional
overrides.  Exit codes: 0 ok, 1 config error, 2 resource cap exceeded,
3 verification failure (failed bound checks or certificates).
"""

import argparse
import sys

from .config import load_config
from .errors import CertificationError, ConfigError, QuadratureError, ResourceLimitError
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RESOURCE = 2
EXIT_VERIFY = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dpmix",
        description=(
            "Posterior of the number of clusters under a Dirichlet process "
            "mixture with a prior on the concentration parameter: exact "
            "computation, Gibbs sampling and bound verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("exact", "exact posterior tables of K_n over an n-grid"),
        ("sample", "collapsed Gibbs traces, with exact comparison at small n"),
        ("verify-bounds", "run the bound/identity verification suite"),
        ("consistency-curve", "pr(K_n=t|X) and ratio diagnostics along an n-grid"),
        ("alpha-posterior", "posterior CDF of the concentration parameter"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="parallelism across grid points")
        p.add_argument("--tol", type=float, help="override the quadrature tolerance")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(
                f"config kind {cfg.kind!r} does not match subcommand {args.command!r}"
            )
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be >= 0")
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads must be >= 1")
            cfg.threads = args.threads
        if args.tol is not None:
            if args.tol <= 0:
                raise ConfigError("tol must be > 0")
            cfg.tol = args.tol
        summary = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (CertificationError, QuadratureError) as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    keys = ", ".join(k for k in summary if k not in ("kind", "seed"))
    print(f"ok: {cfg.kind} -> {cfg.out_dir} ({keys})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
