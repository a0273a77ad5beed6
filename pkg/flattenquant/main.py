"""
Main entry point of the FlattenQuant CLI
Parses flags, configures logging and maps failures to structured errors and exit codes
"""

import sys
from typing import List, Optional

from flattenquant.cli import cli_router
from flattenquant.cli.deps import add_config_arguments, build_run_config
from flattenquant.core.errors import FlattenQuantError
from flattenquant.core.logging import get_logger, setup_logging
from flattenquant.schemas.error import ErrorResponse

INTERNAL_ERROR_EXIT = 1


def _print_error(response: ErrorResponse) -> None:
    print(response.model_dump_json(), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Returns:
        int: 0 on success, the error's exit code (2) for user and data errors,
        1 for unexpected failures
    """
    parser = cli_router.build_parser(add_config_arguments)
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_format)
    logger = get_logger(__name__)

    try:
        cfg = build_run_config(args)
        logger.info("Command started", command=args.command, config=cfg.resolved())
        return args.handler(cfg, args)
    except FlattenQuantError as exc:
        logger.error("Command failed", command=args.command, code=exc.code, error=exc.message, detail=exc.detail)
        _print_error(ErrorResponse(**exc.to_dict()))
        return exc.exit_code
    except Exception as exc:
        logger.error(
            "Unhandled exception occurred",
            command=args.command,
            error=str(exc),
            error_type=type(exc).__name__,
            exc_info=True,
        )
        _print_error(ErrorResponse(error="internal error", code="internal_error", detail={"type": type(exc).__name__}))
        return INTERNAL_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
