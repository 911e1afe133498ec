import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from settings import LOG_LEVEL

# Configure logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

from Cli.commands import compare, offline, online, solve, verify
from Cli.common import config_from_args
from errors import SemRbException
from models import Subcommand

logger = logging.getLogger(__name__)

COMMANDS = {
    Subcommand.VERIFY: verify,
    Subcommand.SOLVE: solve,
    Subcommand.OFFLINE: offline,
    Subcommand.ONLINE: online,
    Subcommand.COMPARE: compare,
}

EXIT_INVALID_ARGUMENTS = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semrb",
        description="Statically condensed spectral/hp solver and reduced basis model for steady channel flow",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for command in COMMANDS.values():
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        logger.info(f"Running '{config.subcommand.value}'")
        return COMMANDS[config.subcommand].run(config)
    except ValidationError as e:
        logger.error(f"Invalid arguments: {e}")
        return EXIT_INVALID_ARGUMENTS
    except SemRbException as e:
        logger.error(e.detail)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
