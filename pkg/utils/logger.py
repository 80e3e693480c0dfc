"""
Structured Logging for Pipeline Runs
====================================
Features:
- JSON structured logging
- Run ID tracking so every line of one command can be correlated
- Per-run log file inside the command's output directory
- Performance logging
"""
import logging
import os
import sys
import time
import uuid
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Optional

from pythonjsonlogger import jsonlogger

from config import settings

# Context variable for run tracking
run_id_var: ContextVar[str] = ContextVar('run_id', default='no-run-id')

_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

RUN_LOG_NAME = "run.log"


class RunIdFilter(logging.Filter):
    """Add run_id to all log records"""
    def filter(self, record):
        record.run_id = run_id_var.get()
        return True


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """Custom JSON formatter with additional fields"""
    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)
        log_record['timestamp'] = datetime.now(timezone.utc).isoformat()
        log_record['level'] = record.levelname
        log_record['logger'] = record.name
        log_record['run_id'] = getattr(record, 'run_id', 'no-run-id')

        # Add file info for errors
        if record.levelno >= logging.ERROR:
            log_record['file'] = record.pathname
            log_record['line'] = record.lineno
            log_record['function'] = record.funcName


def _build_formatter() -> logging.Formatter:
    if settings.MCG_LOG_FORMAT == "text":
        return logging.Formatter('%(asctime)s %(levelname)s %(name)s [%(run_id)s] %(message)s')
    return CustomJsonFormatter(
        '%(timestamp)s %(level)s %(name)s %(message)s %(run_id)s',
        json_ensure_ascii=False
    )


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """Configure JSON logging on stderr"""
    logger = logging.getLogger()
    logger.handlers.clear()

    log_level = _LEVELS.get((level or settings.MCG_LOG).lower(), logging.INFO)
    logger.setLevel(log_level)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(_build_formatter())
    console_handler.setLevel(log_level)
    console_handler.addFilter(RunIdFilter())
    logger.addHandler(console_handler)

    return logger


def attach_run_log(out_dir: str) -> logging.Handler:
    """Mirror all log records of the current run into out_dir/run.log"""
    os.makedirs(out_dir, exist_ok=True)
    root = logging.getLogger()
    handler = logging.FileHandler(os.path.join(out_dir, RUN_LOG_NAME), encoding='utf-8')
    handler.setFormatter(_build_formatter())
    handler.setLevel(root.level)
    handler.addFilter(RunIdFilter())
    root.addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


def get_logger(name: str) -> logging.Logger:
    """Get a logger with the specified name"""
    return logging.getLogger(name)


def set_run_id(run_id: str = None) -> str:
    """Set run ID for the current context"""
    rid = run_id or str(uuid.uuid4())[:8]
    run_id_var.set(rid)
    return rid


def get_run_id() -> str:
    """Get current run ID"""
    return run_id_var.get()


# ============== Performance Logging ==============

class PerfLogger:
    """Context manager for performance logging"""
    def __init__(self, operation: str, threshold_ms: float = None):
        self.operation = operation
        self.threshold_ms = threshold_ms if threshold_ms is not None else settings.MCG_SLOW_OPERATION_MS
        self.start_time = None
        self.duration_ms = None
        self.logger = logging.getLogger('perf')

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration_ms = (time.perf_counter() - self.start_time) * 1000

        log_data = {
            "operation": self.operation,
            "duration_ms": round(self.duration_ms, 2),
            "run_id": get_run_id()
        }

        if self.duration_ms > self.threshold_ms:
            self.logger.warning(f"SLOW_OPERATION: {self.operation}", extra=log_data)
        else:
            self.logger.info(f"PERF: {self.operation}", extra=log_data)
