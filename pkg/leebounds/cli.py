"""Command-line entry point for leebounds."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config_loader import ConfigLoader
from data_io import read_raw
from errors import LeeBoundsError
from pipeline import oracle_check, run_pipeline, simulate, write_json

# Set up logging
logger = logging.getLogger(__name__)


def _probabilities(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from e


def _shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default="config/config.json", help="run configuration JSON")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--bootstrap", type=int, help="bootstrap replications B")
    parser.add_argument("--variance-mode", choices=["bootstrap", "analytic-plugin"])
    parser.add_argument("--directions", type=int, help="number of grid directions")
    parser.add_argument("--scheme", choices=["auto", "equal-angle", "fibonacci", "gaussian"])
    parser.add_argument("--space")
    parser.add_argument("--eval-points", type=_probabilities, help="e.g. 0.1,0.15,0.2")
    parser.add_argument("--lambda", dest="lam", type=float, help="contamination share")
    parser.add_argument("--covariate", help="column with discrete covariate strata")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leebounds",
        description="Sharp bounds and confidence regions for mean outcomes of random "
        "objects under sample selection.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("estimate", "identified set from a dataset"),
        ("infer", "identified set plus bootstrap confidence region"),
        ("effects", "treatment-effect summaries, geodesics and joint regions"),
    ):
        sub = commands.add_parser(name, help=text)
        sub.add_argument("data", help="input CSV")
        _shared(sub)

    sub = commands.add_parser("simulate", help="generate a synthetic dataset")
    _shared(sub)
    sub.add_argument("--design", choices=["atus-like", "sleep-like", "custom"])
    sub.add_argument("--n", type=int)
    sub.add_argument("--retention", type=float, nargs=2, metavar=("TREATED", "CONTROL"))
    sub.add_argument("--effect", type=float)
    sub.add_argument("--coverage", type=int, default=0, metavar="M")

    sub = commands.add_parser("oracle-check", help="compare trimmed means with the LP oracle")
    _shared(sub)
    sub.add_argument("--instances", type=int, default=1000)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the command line.

    Returns:
        0 on success, else the exit code of the raised error
    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    overrides = {
        "seed": args.seed,
        "alpha": args.alpha,
        "bootstrap": args.bootstrap,
        "variance_mode": args.variance_mode,
        "directions": args.directions,
        "scheme": args.scheme,
        "space": args.space,
        "eval_grid": args.eval_points,
        "lam": args.lam,
        "covariate": args.covariate,
        "threads": args.threads,
    }
    if args.command == "simulate":
        overrides.update(
            design=args.design, n=args.n, retention=args.retention, effect=args.effect
        )
    try:
        config = ConfigLoader(config_path=args.config).run_config(**overrides)
        if args.command == "simulate":
            written = simulate(config, args.out_dir, args.coverage)
        elif args.command == "oracle-check":
            summary = oracle_check(args.instances, config.seed)
            written = {"oracle": write_json(Path(args.out_dir) / "oracle.json", summary)}
        else:
            raw = read_raw(args.data, config.space, config.covariate)
            written = run_pipeline(config, raw, args.out_dir, args.command)
    except LeeBoundsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    for name, path in sorted(written.items()):
        logger.info(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
