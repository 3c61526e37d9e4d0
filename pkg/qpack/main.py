"""Command-line entry point for qpack."""

import argparse
import logging
import sys
from typing import List, NoReturn, Optional

from dotenv import load_dotenv

from qpack import __version__
from qpack.core.config import parse_config, resolve_workers
from qpack.core.errors import ArtifactError, QpackError
from qpack.core.file_operations import DefaultFileOperations, FileOperations
from qpack.core.pipeline import COMMANDS, run_command

EXIT_OK = 0


def setup_logging(verbose: bool = False) -> None:
    """Configure logging for the application; diagnostics go to stderr."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpack",
        description="FDTD conductor-loss analysis of superconducting-qubit packages",
    )
    parser.add_argument("command", choices=COMMANDS, help="Analysis to run")
    parser.add_argument("--config", required=True, help="Path to the JSON run configuration")
    parser.add_argument("--out", required=True, help="Directory for the output artifacts")
    parser.add_argument("--workers", type=int, default=None, help="Parallel simulations for sweep-gap")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--version", action="version", version=f"qpack {__version__}")
    return parser


def read_config_text(path: str, file_operations: Optional[FileOperations] = None) -> str:
    try:
        return (file_operations or DefaultFileOperations()).read_file(path)
    except OSError as e:
        raise ArtifactError(f"cannot read config {path}: {e}") from e


def execute(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = parse_config(read_config_text(args.config))
        workers = resolve_workers(args.workers, config)
        logging.info("qpack %s: %s with %d worker(s), config %s", __version__, args.command, workers, config.digest()[:12])
        result = run_command(args.command, config, args.out, workers)
    except QpackError as e:
        logging.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    logging.info("%s finished, %d artifact(s) in %s", args.command, len(result.artifacts), args.out)
    return result.exit_code


def main() -> NoReturn:
    """Main function to execute the qpack application."""
    load_dotenv()
    sys.exit(execute())


if __name__ == "__main__":
    main()
