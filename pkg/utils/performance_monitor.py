"""
Stage timing for the long-running parts of a run (dataset generation,
training, evaluation)
"""

import logging
from functools import wraps
from typing import Callable, Optional

from utils.logger import PerfLogger

logger = logging.getLogger(__name__)


def monitor_performance(func: Optional[Callable] = None, *, stage: Optional[str] = None,
                        threshold_ms: Optional[float] = None):
    """
    Decorator timing one pipeline stage through PerfLogger.

    Usable bare (`@monitor_performance`) or with a stage name
    (`@monitor_performance(stage="train")`). Failures are logged with the
    elapsed time and re-raised unchanged.
    """
    def decorate(fn: Callable) -> Callable:
        name = stage or fn.__name__

        @wraps(fn)
        def wrapper(*args, **kwargs):
            perf = PerfLogger(f"stage {name}", threshold_ms=threshold_ms)
            try:
                with perf:
                    return fn(*args, **kwargs)
            except Exception as exc:
                logger.error(
                    f"Stage {name} failed after {perf.duration_ms:.1f} ms",
                    extra={"stage": name, "duration_ms": round(perf.duration_ms, 2), "error": str(exc)},
                )
                raise

        return wrapper

    if func is not None:
        return decorate(func)
    return decorate
