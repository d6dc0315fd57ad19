"""
Logging Setup
Routes the package loggers through a rich console handler.
"""

import logging
from typing import Any

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "app"


def kv(message: str, **fields: Any) -> str:
    """Format a log message followed by key=value pairs."""
    if not fields:
        return message
    pairs = " ".join(f"{key}={value}" for key, value in fields.items())
    return f"{message} {pairs}"


def configure_logging(level: str = "INFO", rich_console: bool = True) -> logging.Logger:
    """
    Configure the package logger once.

    Args:
        level: Logging level name
        rich_console: Use RichHandler on stderr; plain StreamHandler otherwise

    Returns:
        The package root logger
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level.upper())
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    if rich_console:
        handler: logging.Handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=True,
        )
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    else:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))

    logger.addHandler(handler)
    logger.propagate = False
    return logger
