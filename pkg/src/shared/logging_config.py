"""
Logging configuration for structured JSON logging.
"""

import json
import logging
import logging.handlers
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from .config import get_config

_RESERVED_RECORD_KEYS = {
    "name", "msg", "args", "levelname", "levelno", "pathname",
    "filename", "module", "lineno", "funcName", "created",
    "msecs", "relativeCreated", "thread", "threadName",
    "processName", "process", "getMessage", "exc_info",
    "exc_text", "stack_info", "taskName",
}


class JSONFormatter(logging.Formatter):
    """Custom JSON formatter for structured logging."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON."""
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        # Add exception info if present
        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        # Add extra fields
        for key, value in record.__dict__.items():
            if key not in _RESERVED_RECORD_KEYS:
                log_entry[key] = value

        return json.dumps(log_entry, default=str)


def _parse_size(size: Any) -> int:
    """Parse sizes such as '10MB' into bytes."""
    if isinstance(size, (int, float)):
        return int(size)
    text = str(size).strip().upper()
    for suffix, factor in (("GB", 1024 ** 3), ("MB", 1024 ** 2), ("KB", 1024)):
        if text.endswith(suffix):
            return int(float(text[: -len(suffix)]) * factor)
    return int(text)


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Set up logging configuration."""
    config = get_config()
    log_config = config.get("logging", {})

    # Get log level
    level_name = (level or log_config.get("level", "INFO")).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    # Create logs directory
    log_path = Path(log_file or log_config.get("file", "logs/locper_homog.log"))
    log_path.parent.mkdir(parents=True, exist_ok=True)

    # Configure root logger
    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Remove existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)

    # Use simple format for console
    console_formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    console_handler.setFormatter(console_formatter)
    root_logger.addHandler(console_handler)

    # File handler, JSON lines unless logging.format is "text"
    file_handler = logging.handlers.RotatingFileHandler(
        log_path,
        maxBytes=_parse_size(log_config.get("max_size", "10MB")),
        backupCount=log_config.get("backup_count", 5),
    )
    file_handler.setLevel(log_level)
    if str(log_config.get("format", "json")).lower() == "text":
        file_handler.setFormatter(console_formatter)
    else:
        file_handler.setFormatter(JSONFormatter())
    root_logger.addHandler(file_handler)

    # Set specific logger levels
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numexpr").setLevel(logging.WARNING)

    # Log configuration
    logger = logging.getLogger(__name__)
    logger.info("Logging configured", extra={
        "log_level": level_name,
        "log_file": str(log_path),
        "log_format": log_config.get("format", "json"),
        "max_size": log_config.get("max_size", "10MB"),
        "backup_count": log_config.get("backup_count", 5),
    })


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance."""
    return logging.getLogger(name)


def log_task_start(task_id: str, task_name: str, **kwargs) -> None:
    """Log task start."""
    logger = get_logger("task")
    logger.info(f"Task {task_id} started: {task_name}", extra={
        "task_id": task_id,
        "task_name": task_name,
        "status": "started",
        **kwargs
    })


def log_task_complete(task_id: str, task_name: str, duration: float, **kwargs) -> None:
    """Log task completion."""
    logger = get_logger("task")
    logger.info(f"Task {task_id} completed: {task_name}", extra={
        "task_id": task_id,
        "task_name": task_name,
        "status": "completed",
        "duration_seconds": duration,
        **kwargs
    })


def log_task_error(task_id: str, task_name: str, error: Exception, **kwargs) -> None:
    """Log task error."""
    logger = get_logger("task")
    logger.error(f"Task {task_id} failed: {task_name}", extra={
        "task_id": task_id,
        "task_name": task_name,
        "status": "failed",
        "error_type": type(error).__name__,
        "error_message": str(error),
        **kwargs
    }, exc_info=True)


def log_solver_run(problem: str, unknowns: int, iterations: int, residual: float,
                   duration: float, **kwargs) -> None:
    """Log a linear solve."""
    logger = get_logger("solver")
    logger.info(f"Solve: {problem}", extra={
        "problem": problem,
        "unknowns": unknowns,
        "iterations": iterations,
        "residual": residual,
        "duration_seconds": duration,
        **kwargs
    })


def log_check_result(check_id: str, status: str, measured: float, tolerance: float,
                     **kwargs) -> None:
    """Log a verification check outcome."""
    logger = get_logger("verify")
    level = logging.INFO if status == "pass" else logging.WARNING
    logger.log(level, f"Check {check_id}: {status}", extra={
        "check_id": check_id,
        "status": status,
        "measured": measured,
        "tolerance": tolerance,
        **kwargs
    })
