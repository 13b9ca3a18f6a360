"""Structured logging configuration using structlog."""

import logging
import sys
from typing import Any, Optional

import structlog
from structlog.types import EventDict, Processor

from compenkit.core.config import get_settings


def add_app_context(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Add application context to log entries."""
    settings = get_settings()
    event_dict["app"] = settings.app_name
    event_dict["version"] = settings.app_version
    return event_dict


def setup_logging(level: Optional[str] = None, json_output: Optional[bool] = None) -> None:
    """
    Configure structured logging for the library and the CLI.

    Log records go to stderr so that command output on stdout stays
    machine-readable.

    Args:
        level: Log level name; defaults to the configured ``log_level``
        json_output: Force JSON (True) or console (False) rendering; by
            default console rendering is used in development only
    """
    settings = get_settings()
    level_name = (level or settings.log_level).upper()

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level_name, logging.INFO),
        force=True,
    )

    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        add_app_context,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
    ]

    if json_output is None:
        json_output = settings.environment != "development"

    if json_output:
        processors.extend([
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(),
        ])
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """
    Get a structured logger instance.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured structlog logger
    """
    return structlog.get_logger(name)


def bind_context(**kwargs: Any) -> None:
    """
    Bind context variables to the current logger context.

    Example:
        bind_context(run_seed=7, variant="no_p1")
    """
    structlog.contextvars.bind_contextvars(**kwargs)


def unbind_context(*keys: str) -> None:
    """Unbind context variables from the current logger context."""
    structlog.contextvars.unbind_contextvars(*keys)


def clear_context() -> None:
    """Clear all context variables from the current logger context."""
    structlog.contextvars.clear_contextvars()


class LogContext:
    """
    Context manager for temporary log context binding.

    Example:
        with LogContext(variant="coarse_only", seed=3):
            logger.info("training_started")
    """

    def __init__(self, **kwargs: Any):
        self.context = kwargs

    def __enter__(self) -> "LogContext":
        bind_context(**self.context)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        unbind_context(*self.context.keys())


def log_error(
    logger: structlog.stdlib.BoundLogger,
    error: Exception,
    event: str,
    **kwargs: Any,
) -> None:
    """
    Log an error with its type and any structured details it carries.

    Example:
        try:
            train(model, dataset, cfg)
        except TrainingDivergedError as e:
            log_error(logger, e, "training_failed")
    """
    details = getattr(error, "details", {}) or {}
    logger.error(
        event,
        error=str(error),
        error_type=type(error).__name__,
        **{**details, **kwargs},
    )


def log_performance(
    logger: structlog.stdlib.BoundLogger,
    operation: str,
    duration_ms: float,
    **kwargs: Any,
) -> None:
    """
    Log the duration of an operation.

    Example:
        log_performance(logger, "dataset_generation", duration_ms=812.4, pairs=40)
    """
    logger.info(
        "performance_metric",
        operation=operation,
        duration_ms=round(duration_ms, 3),
        **kwargs,
    )
