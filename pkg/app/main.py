"""
Command-line entry point
"""

import argparse
import sys
import time
from typing import List, Optional

from pydantic import ValidationError

from app.config import settings
from commands import halanay, lemmas, lmi, reproduce, simulate
from models.errors import KseError
from utils.logger import get_logger, setup_logging

logger = get_logger(__name__)

COMMANDS = (lmi, simulate, halanay, lemmas, reproduce)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Certification and simulation of sampled-data control of the 2D Kuramoto-Sivashinsky equation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("--no-log-files", action="store_true", help="Log to the console only")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, validate and run one subcommand.

    Exit codes: 0 success or feasible, 1 infeasible or acceptance failure,
    2 usage, configuration or unexpected error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    setup_logging(to_files=not args.no_log_files)
    started = time.time()
    try:
        recipe = args.recipe(args)
        logger.info(f"Command: {recipe.name} ({recipe.kind})")
        logger.debug(f"Parameters: {recipe.params}")
        code = args.handler(args)
    except ValidationError as e:
        logger.warning(f"Invalid parameters: {e}")
        print(f"error: invalid parameters\n{e}", file=sys.stderr)
        return 2
    except KseError as e:
        logger.warning(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Unhandled exception: {e}", exc_info=True)
        print(f"error: {e}" if settings.debug else "error: an unexpected error occurred", file=sys.stderr)
        return 2
    logger.info(f"Command {args.command} finished with exit code {code} in {time.time() - started:.2f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
