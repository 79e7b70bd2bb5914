import logging
import sys
from typing import Any, Dict, Optional

import structlog

from grpcoll.core.config import settings


def configure_logging(level: Optional[str] = None, json: Optional[bool] = None) -> None:
    """Configure structured logging for the application."""
    level_name = (level or settings.LOG_LEVEL).upper()
    numeric_level = getattr(logging, level_name, logging.INFO)
    use_json = settings.LOG_JSON if json is None else json

    renderer = (
        structlog.processors.JSONRenderer()
        if use_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        cache_logger_on_first_use=True,
    )

    # uvicorn and asyncio go through the stdlib root logger
    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    if not root_logger.handlers:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(logging.Formatter("%(message)s"))
        root_logger.addHandler(console_handler)


def get_logger(name: str) -> structlog.BoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def log_request(
    logger: structlog.BoundLogger,
    request_id: str,
    method: str,
    path: str,
    status_code: int,
    duration_ms: float,
    **kwargs: Any,
) -> None:
    """Log ops API request details in a structured format."""
    logger.info(
        "http_request",
        request_id=request_id,
        method=method,
        path=path,
        status_code=status_code,
        duration_ms=duration_ms,
        **kwargs,
    )


def log_transfer(
    logger: structlog.BoundLogger,
    role: str,
    phase: str,
    samples: int,
    bytes_count: int,
    duration_ms: float,
    **kwargs: Any,
) -> None:
    """Log sample/byte accounting for one side of a transfer."""
    logger.info(
        "transfer",
        role=role,
        phase=phase,
        samples=samples,
        bytes=bytes_count,
        duration_ms=duration_ms,
        **kwargs,
    )


def log_error(logger: structlog.BoundLogger, error: Exception, **kwargs: Any) -> None:
    """Log error details in a structured format."""
    logger.error(
        "error_occurred",
        error_type=type(error).__name__,
        error_message=str(error),
        code=getattr(error, "code", None),
        **kwargs,
    )


def log_experiment_event(
    logger: structlog.BoundLogger,
    experiment_id: str,
    phase: str,
    metrics: Optional[Dict[str, Any]] = None,
    **kwargs: Any,
) -> None:
    """
    Log one step of an experiment run.

    Args:
        logger: The structured logger instance
        experiment_id: Experiment id (e.g. 'exp-scaling')
        phase: Step within the run (e.g. 'train', 'evaluate', 'cell_done')
        metrics: Measured values for the step
    """
    logger.info(
        "experiment_event",
        experiment_id=experiment_id,
        phase=phase,
        metrics=metrics or {},
        **kwargs,
    )
