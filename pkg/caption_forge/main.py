"""
This script builds the command-line interface and includes the command groups.

Every subcommand handler receives the parsed flags and the merged run settings and returns the
process exit code.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from caption_forge.commands import corpus, inference, reports, training
from caption_forge.utils.config import CAPTION_FORGE_LOG_LEVEL, Settings, load_settings
from caption_forge.utils.errors import CaptionForgeError, ExitCode

logger = logging.getLogger("caption_forge")


class CliParser(argparse.ArgumentParser):
    """Argument parser reporting usage errors with exit code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> CliParser:
    parser = CliParser(prog="caption-forge", description="Desk-scale neural image captioning toolkit")
    parser.add_argument("--seed", type=int, help="seed of every random choice (env CAPTION_FORGE_SEED)")
    parser.add_argument("--config", type=Path, help="key = value settings file")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for group in (corpus, training, inference, reports):
        group.register(subparsers)
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    else:
        level = CAPTION_FORGE_LOG_LEVEL.upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def run(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments and execute one subcommand.

    Args:
        argv: Arguments without the program name; `sys.argv[1:]` if None.

    Returns:
        int: 0 on success, 1 on usage errors, 2 on data errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args)

    overrides = {key: value for key, value in vars(args).items() if key in Settings.model_fields}
    try:
        settings = load_settings(args.config, overrides)
        return int(args.handler(args, settings))
    except CaptionForgeError as exc:
        logger.error("%s", exc.detail)
        return int(exc.exit_code)
    except ValidationError as exc:
        logger.error("Invalid data: %s", exc)
        return int(ExitCode.DATA)
    except FileNotFoundError as exc:
        logger.error("No such file: %s", exc.filename)
        return int(ExitCode.USAGE)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
