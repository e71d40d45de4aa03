"""
CONTINUUM-FORGE — Console
Shared Rich console and logging setup.
"""

from __future__ import annotations
import logging

from rich.console import Console
from rich.logging import RichHandler

console = Console()
err_console = Console(stderr=True)

LOGGER_NAME = "continuum_forge"

_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def setup_logging(verbosity: int = 0) -> logging.Logger:
    """Install a RichHandler on the package logger. Safe to call more than once."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(_LEVELS.get(verbosity, logging.DEBUG))
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(
            console=err_console,
            show_path=False,
            rich_tracebacks=True,
            markup=False,
        )
        handler.setFormatter(logging.Formatter("%(name)s  %(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger
