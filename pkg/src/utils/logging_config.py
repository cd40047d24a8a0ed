"""Logging setup for the gridflex command line.

Package modules log through the standard ``logging`` loggers; the command
line forwards those records to a single loguru sink.
"""

from __future__ import annotations

import inspect
import logging
import os
import sys
from typing import TextIO

import loguru

ROOT_LOGGER = "src"
LOG_LEVEL_ENV_VAR = "GRIDFLEX_LOG_LEVEL"
PLAIN_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} {level} {extra[logger_name]}: {message}"


class InterceptHandler(logging.Handler):
    """Forward standard library records to loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level: str | int = loguru.logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = inspect.currentframe(), 0
        while frame is not None and (depth == 0 or frame.f_code.co_filename == logging.__file__):
            frame = frame.f_back
            depth += 1

        loguru.logger.opt(depth=depth, exception=record.exc_info).bind(
            logger_name=record.name,
        ).log(level, record.getMessage())


def configure_logging(
    level: str | None = None,
    *,
    json_format: bool = False,
    sink: TextIO | None = None,
) -> logging.Logger:
    """Route the package logger into one loguru sink.

    Args:
        level: Level name such as ``INFO``. Falls back to ``GRIDFLEX_LOG_LEVEL``
            and then ``WARNING``.
        json_format: Emit loguru's serialized JSON lines instead of plain text.
        sink: Stream to write to; defaults to ``sys.stderr``.

    Returns:
        The configured package logger.

    Raises:
        ValueError: If ``level`` is not a known logging level name.
    """
    level_name = (level or os.getenv(LOG_LEVEL_ENV_VAR) or "WARNING").upper()
    numeric_level = logging.getLevelName(level_name)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Unknown log level '{level_name}'.")

    loguru.logger.remove()
    loguru.logger.configure(extra={"logger_name": ROOT_LOGGER})
    loguru.logger.add(
        sink if sink is not None else sys.stderr,
        level=numeric_level,
        format=PLAIN_FORMAT,
        serialize=json_format,
    )

    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.addHandler(InterceptHandler())
    logger.setLevel(numeric_level)
    logger.propagate = False
    return logger
