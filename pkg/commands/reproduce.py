"""
Reproduction of the reference example
"""

import argparse
import sys

from app.config import settings
from models.schemas import ExperimentRecipe
from services.reproduction_service import ReproductionService
from utils.logger import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("reproduce", help="Run every reproduction stage and print a pass/fail table")
    parser.add_argument("--quick", action="store_true", help="Simulate at m=32 instead of m=64")
    parser.add_argument("--delta", type=float, default=None, help="Override the averaged-case decay rate")
    parser.set_defaults(handler=run, recipe=recipe)


def recipe(args: argparse.Namespace) -> ExperimentRecipe:
    return ExperimentRecipe(name="reproduce", kind="reproduce",
                            params={"quick": args.quick, "delta": args.delta})


def run(args: argparse.Namespace) -> int:
    service = ReproductionService(output_dir=settings.output_dir, quick=args.quick, delta_override=args.delta)
    report = service.run()
    print(report.render(), end="")
    if not report.passed:
        failing = ", ".join(report.failing())
        logger.warning(f"Reproduction failed at: {failing}")
        print(f"failing stages: {failing}", file=sys.stderr)
        return 1
    return 0
