"""GUIM Logging System.

Structured logging built on structlog.

This module provides:
- configure_logging(): Configure the logging system
- get_logger(): Get a structured logger instance
- bind_context() / logging_context(): Attach run, epoch or protocol context

Example:
    >>> from guim.core.logging import configure_logging, get_logger
    >>> configure_logging(level="DEBUG")
    >>> logger = get_logger("guim.capabilities.training")
    >>> logger.info("epoch finished", epoch=3, validation_loss=41.2)
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import structlog

from .config import (
    LogFormat,
    LogLevel,
    configure_logging,
    get_default_processors,
    reset_logging,
)
from .context import (
    bind_context,
    clear_context,
    get_context,
    logging_context,
    unbind_context,
)

if TYPE_CHECKING:
    from structlog.typing import FilteringBoundLogger

__all__ = [
    "configure_logging",
    "reset_logging",
    "get_default_processors",
    "LogLevel",
    "LogFormat",
    "get_logger",
    "bind_context",
    "unbind_context",
    "clear_context",
    "get_context",
    "logging_context",
]


def get_logger(name: str | None = None) -> FilteringBoundLogger:
    """Get a structured logger bound to ``name``.

    The logger stays lazy until first use, so it picks up whatever
    configure_logging() installed. Context set via bind_context() is merged
    into every event.
    """
    return structlog.get_logger(name)  # type: ignore[no-any-return]
