"""
Halanay decay-rate subcommand
"""

import argparse

from models.schemas import ExperimentRecipe, HalanayParams
from utils.inequalities import halanay_residual, halanay_sigma
from utils.logger import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("halanay", help="Solve sigma = delta - (delta1/2) exp(2 sigma h)")
    parser.add_argument("--delta", type=float, required=True)
    parser.add_argument("--delta1", type=float, required=True)
    parser.add_argument("--h", type=float, required=True)
    parser.set_defaults(handler=run, recipe=recipe)


def recipe(args: argparse.Namespace) -> ExperimentRecipe:
    return ExperimentRecipe(name="halanay", kind="halanay",
                            params={"delta": args.delta, "delta1": args.delta1, "h": args.h})


def run(args: argparse.Namespace) -> int:
    params = HalanayParams(delta=args.delta, delta1=args.delta1, h=args.h)
    sigma = halanay_sigma(params)
    logger.debug(f"sigma={sigma!r}, residual={halanay_residual(params, sigma):.3e}")
    print(f"{sigma:.12f}")
    return 0
