"""Command line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 usage or configuration error, 3 resource cap,
4 metric failure. Heavy modules are imported only after ``--threads`` has
been applied to the environment.
"""

from __future__ import annotations

import argparse
import os
import sys

from topovae import __version__

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_METRIC = 0, 2, 3, 4
SEED_ENV = "TVAE_SEED"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "BLIS_NUM_THREADS", "NUMEXPR_NUM_THREADS")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="topovae",
        description="Infer Betti numbers of physics observations and train a "
                    "topology-constrained autoencoder on them.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="BLAS threads (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a labeled dataset")
    g.add_argument("--system", required=True, choices=("oscillator", "orbit", "qubit"))
    g.add_argument("--n", type=int, default=1000, help="number of samples")
    g.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}, then 0")
    g.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("betti", help="persistent homology of a dataset")
    b.add_argument("--input", required=True)
    b.add_argument("--max-dim", type=int, choices=(1, 2), default=1)
    b.add_argument("--landmarks", type=_positive_int, default=None,
                   help="farthest-point landmarks (default 400 for max-dim 1, 150 for 2)")
    b.add_argument("--lifetime-ratio", type=float, default=0.15)
    b.add_argument("--max-radius", type=float, default=None,
                   help="filtration cutoff (default 0.3 x landmark diameter)")
    b.add_argument("--max-simplices", type=_positive_int, default=None)
    b.add_argument("--out", required=True, help="barcode JSON path")

    t = sub.add_parser("train", help="train the autoencoder")
    t.add_argument("--input", required=True)
    t.add_argument("--system", choices=("oscillator", "orbit", "qubit"), default=None,
                   help="default: from the data header, else from --term")
    t.add_argument("--term", choices=("circle", "sphere", "lemniscate"), default=None)
    t.add_argument("--tpv", type=_positive_int, default=None)
    t.add_argument("--gpv", type=int, default=None)
    t.add_argument("--alpha", type=_nonneg_float, default=None)
    t.add_argument("--beta", type=_nonneg_float, default=None)
    t.add_argument("--gamma", type=_nonneg_float, default=None)
    t.add_argument("--iters", type=int, default=50_000)
    t.add_argument("--batch-size", type=_positive_int, default=100)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--eval-every", type=_positive_int, default=1000)
    t.add_argument("--recon", choices=("squared", "norm"), default="squared")
    t.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}, then 0")
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--input", required=True)
    e.add_argument("--labels", default=None)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)

    x = sub.add_parser("export", help="plot-ready CSVs from an evaluated run")
    x.add_argument("--run", required=True, help="directory written by eval")
    x.add_argument("--out", required=True)
    return p


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"${SEED_ENV}={env!r} is not an integer") from None


def apply_threads(n: int | None) -> None:
    # only effective when numpy has not been imported yet
    if n is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    apply_threads(args.threads)

    from topovae import commands

    try:
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args.seed)
        return commands.run(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except commands.ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except commands.MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except commands.USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
