"""
Functional-inequality property run
"""

import argparse

from app.config import settings
from models.schemas import ExperimentRecipe
from services.lemma_service import verify_lemmas
from utils.logger import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify-lemmas", help="Check the inequality oracles on seeded random fields")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--m", type=int, default=64, help="Grid intervals per side")
    parser.set_defaults(handler=run, recipe=recipe)


def recipe(args: argparse.Namespace) -> ExperimentRecipe:
    return ExperimentRecipe(name="verify-lemmas", kind="verify-lemmas",
                            params={"seed": args.seed, "count": args.count, "m": args.m})


def run(args: argparse.Namespace) -> int:
    report = verify_lemmas(args.seed, args.count, m=args.m)
    text = report.render()
    path = settings.output_dir / f"lemmas_seed{args.seed}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Lemma report written to {path}")
    print(text, end="")
    return 0 if report.passed else 1
