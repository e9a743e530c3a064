"""
Workbench Main - Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 runtime/numeric error, 4 I/O error.
"""

import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from core.errors import WorkbenchError
from workbench.cli.commands import HANDLERS, build_run_config, format_validation_error
from workbench.cli.parser import build_parser
from workbench.config import get_settings

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    """Configure root logging once per process."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def _fail(code: int, message: str) -> int:
    logger.error(message)
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and map failures to exit codes.

    Args:
        argv: Arguments without the program name; sys.argv[1:] when None

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as e:
        configure_logging("INFO")
        return _fail(EXIT_VALIDATION, f"invalid settings:\n{e}")
    configure_logging(getattr(args, "log_level", settings.log_level))

    try:
        config = build_run_config(args.command, args, settings)
    except ValidationError as e:
        return _fail(EXIT_VALIDATION, format_validation_error(e))
    except WorkbenchError as e:
        return _fail(e.exit_code, str(e))
    except OSError as e:
        return _fail(EXIT_IO, str(e))

    logger.info(f"Running {args.command}")
    try:
        HANDLERS[args.command](config)
    except ValidationError as e:
        return _fail(EXIT_VALIDATION, format_validation_error(e))
    except WorkbenchError as e:
        return _fail(e.exit_code, str(e))
    except OSError as e:
        return _fail(EXIT_IO, str(e))
    except (ValueError, ArithmeticError, IndexError) as e:
        return _fail(EXIT_RUNTIME, str(e))

    logger.info(f"Finished {args.command}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
