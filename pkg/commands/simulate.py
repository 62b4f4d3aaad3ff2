"""
Closed-loop simulation subcommand
"""

import argparse
from pathlib import Path

from app.config import settings
from models.schemas import ExperimentRecipe
from services.simulation_service import SimulationService
from utils.config_file import load_sim_config
from utils.logger import get_logger

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Integrate the closed loop from a config file")
    parser.add_argument("--config", type=Path, required=True, help="Flat key = value config file")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (default <output_dir>/simulate)")
    parser.set_defaults(handler=run, recipe=recipe)


def recipe(args: argparse.Namespace) -> ExperimentRecipe:
    return ExperimentRecipe(name="simulate", kind="simulate", params={"config": str(args.config)})


def run(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config)
    out_dir = args.out or settings.output_dir / "simulate"
    service = SimulationService(output_dir=out_dir)
    if config.control_mode == "continuous":
        result = service.run_continuous(config)
    else:
        result = service.run(config)
    last = result.series.rows[-1]
    print(f"steps={result.steps} t={last.t:.12g} V={last.V:.12g} V1={last.V1:.12g} "
          f"c0={last.c0:.12g} blowup={str(result.blowup).lower()}")
    for path in result.files:
        print(path)
    return 1 if result.blowup else 0
