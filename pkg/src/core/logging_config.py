"""
Logging configuration for seastate-spde.

This module sets up a structured logging system using the `structlog` library.
It is environment-aware, providing human-readable, colorized logs in debug or
text mode and machine-parseable JSON logs otherwise.

Key Features:
- Structured Logging: numerical modules log events with key/value context
  (matrix sizes, iteration counts, residuals) instead of formatted strings.
- Timestamping: Uses UTC for all timestamps.
- Run IDs: the command-line front end binds a run identifier and the
  sub-command name through context variables.
- Standard Library Integration: captures logs from standard library modules
  and formats them with the same pipeline.
"""

import logging
import sys
from typing import TYPE_CHECKING, Any, TextIO

import structlog

if TYPE_CHECKING:
    from structlog.types import Processor

from src.core.config import Settings, settings


def add_log_level_as_str(
    _logger: logging.Logger, method_name: str, event_dict: dict[str, Any]
) -> dict[str, Any]:
    """
    Add the log level to the event dict as a string.
    This is useful for filtering logs in log management systems.
    """
    if "level" not in event_dict:
        event_dict["level"] = method_name
    return event_dict


def setup_logging(config: Settings | None = None, stream: TextIO | None = None) -> None:
    """
    Configure the logging system for the application.

    Args:
        config: settings to read the level and format from; defaults to the global settings.
        stream: output stream; stdout by default. The CLI passes stderr so that
            CSV written to stdout is not interleaved with log lines.
    """
    cfg = config or settings

    shared_processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        add_log_level_as_str,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        structlog.stdlib.PositionalArgumentsFormatter(),
    ]

    if cfg.debug or cfg.log_format == "text":
        processors = shared_processors + [
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ]
        formatter = structlog.stdlib.ProcessorFormatter(
            # These run ONLY on `logging` entries that do NOT originate from structlog.
            foreign_pre_chain=shared_processors,
            processors=[
                structlog.stdlib.ProcessorFormatter.remove_processors_meta,
                structlog.dev.ConsoleRenderer(colors=cfg.debug),
            ],
        )
    else:
        processors = shared_processors + [
            structlog.processors.dict_tracebacks,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ]
        formatter = structlog.stdlib.ProcessorFormatter(
            foreign_pre_chain=shared_processors,
            processors=[
                structlog.stdlib.ProcessorFormatter.remove_processors_meta,
                structlog.processors.JSONRenderer(),
            ],
        )

    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(stream or sys.stdout)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        root_logger.removeHandler(existing)
    root_logger.addHandler(handler)
    root_logger.setLevel(cfg.log_level)

    log = structlog.get_logger("seastate.logging_config")
    log.debug("Logging setup complete", debug_mode=cfg.debug, log_level=cfg.log_level)


def get_logger(name: str) -> Any:
    """Return a structlog logger bound to ``name``."""
    return structlog.get_logger(name)
