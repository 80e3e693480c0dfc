"""
Centralized Error Handling
==========================
One exception hierarchy for the whole pipeline. Every error carries a stable
error code and the process exit code the CLI reports for it.
"""
import logging
import traceback
from datetime import datetime, timezone
from functools import wraps
from typing import Optional, Dict, Any

from utils.logger import get_run_id

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_MALFORMED_INPUT = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_GRID_MISMATCH = 5


# ============== Custom Exception Classes ==============

class AppException(Exception):
    """Base exception for all application errors"""
    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_GENERIC,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class _CodedError(AppException):
    """AppException subclass whose codes are fixed per class"""
    error_code = "INTERNAL_ERROR"
    exit_code = EXIT_GENERIC
    default_message = "Operation failed"

    def __init__(self, message: str = None, details: Dict = None):
        super().__init__(message or self.default_message, type(self).exit_code, type(self).error_code, details)


# signal_core

class InvalidSignal(_CodedError):
    """Signal violates sampling invariants"""
    error_code = "INVALID_SIGNAL"
    default_message = "Signal violates sampling invariants"


class AllZeroSignal(_CodedError):
    """Nothing remains after stripping padding"""
    error_code = "ALL_ZERO_SIGNAL"
    default_message = "Signal contains only zeros"


class BadLength(_CodedError):
    """Length outside the supported range"""
    error_code = "BAD_LENGTH"
    default_message = "Signal length outside the supported range"


class WindowTooLarge(_CodedError):
    """Moving-average window longer than the signal"""
    error_code = "WINDOW_TOO_LARGE"
    default_message = "Window is longer than the signal"


# windowing

class LengthMismatch(_CodedError):
    """Paired signals differ in length"""
    error_code = "LENGTH_MISMATCH"
    default_message = "Signals have different lengths"


class SegmentTooLong(_CodedError):
    """Segment size exceeds cycle length"""
    error_code = "SEGMENT_TOO_LONG"
    default_message = "Segment size exceeds cycle length"


# neural

class DimensionMismatch(_CodedError):
    """Input does not match layer dimensions"""
    error_code = "DIMENSION_MISMATCH"
    default_message = "Input does not match layer dimensions"


class NonFiniteActivation(_CodedError):
    """NaN or Inf produced by a forward pass"""
    error_code = "NON_FINITE_ACTIVATION"
    default_message = "Non-finite value in forward pass"


class EmptyBatch(_CodedError):
    """Batch with no examples"""
    error_code = "EMPTY_BATCH"
    default_message = "Batch is empty"


class ShapeMismatch(_CodedError):
    """Parameter and gradient containers disagree"""
    error_code = "SHAPE_MISMATCH"
    default_message = "Parameter and gradient shapes differ"


class DivergenceDetected(_CodedError):
    """Training loss became non-finite"""
    error_code = "DIVERGENCE"
    exit_code = EXIT_DIVERGENCE
    default_message = "Training loss became non-finite"


class BadMagic(_CodedError):
    """File does not start with the expected magic bytes"""
    error_code = "BAD_MAGIC"
    default_message = "File does not start with the expected magic bytes"


class UnsupportedVersion(_CodedError):
    """Container version not understood"""
    error_code = "UNSUPPORTED_VERSION"
    default_message = "Unsupported file format version"


class TruncatedFile(_CodedError):
    """File ended early"""
    error_code = "TRUNCATED_FILE"
    default_message = "File ended before all data was read"


class ArchMismatch(_CodedError):
    """Stored architecture block is inconsistent or unexpected"""
    error_code = "ARCH_MISMATCH"
    default_message = "Stored architecture is inconsistent"


# spectral_eval

class SignalTooShort(_CodedError):
    """Signal shorter than the PSD segment"""
    error_code = "SIGNAL_TOO_SHORT"
    default_message = "Signal shorter than the PSD segment"


class GridMismatch(_CodedError):
    """Frequency grids differ"""
    error_code = "GRID_MISMATCH"
    exit_code = EXIT_GRID_MISMATCH
    default_message = "Frequency grids differ"


class EmptyBand(_CodedError):
    """No defined bins inside the band"""
    error_code = "EMPTY_BAND"
    default_message = "No frequency bins inside the band"


class InsufficientBins(_CodedError):
    """Too few bins for a slope fit"""
    error_code = "INSUFFICIENT_BINS"
    default_message = "Too few bins for a slope fit"


class NonpositiveDensity(_CodedError):
    """Density must be positive for a log fit"""
    error_code = "NONPOSITIVE_DENSITY"
    default_message = "Density must be positive for a log fit"


# cli

class MalformedInput(_CodedError):
    """Input data is malformed"""
    error_code = "MALFORMED_INPUT"
    exit_code = EXIT_MALFORMED_INPUT
    default_message = "Input data is malformed"


class ConfigError(_CodedError):
    """Invalid configuration"""
    error_code = "CONFIG_ERROR"
    exit_code = EXIT_MALFORMED_INPUT
    default_message = "Invalid configuration"


class StorageError(_CodedError):
    """File operation failed"""
    error_code = "IO_ERROR"
    exit_code = EXIT_IO
    default_message = "File operation failed"


class RunLocked(_CodedError):
    """Output directory is in use by another run"""
    error_code = "RUN_LOCKED"
    exit_code = EXIT_IO
    default_message = "Output directory is in use by another run"


# ============== Error Report Builder ==============

def build_error_report(
    error_code: str,
    message: str,
    exit_code: int,
    details: Optional[Dict] = None,
    command: Optional[str] = None
) -> Dict[str, Any]:
    """Build a standardized error report"""
    return {
        "error": {
            "run_id": get_run_id(),
            "code": error_code,
            "message": message,
            "exit_code": exit_code,
            "details": details or {},
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command
        }
    }


def report_exception(exc: BaseException, command: Optional[str] = None) -> int:
    """Log an exception reaching the CLI boundary and return its exit code"""
    if isinstance(exc, AppException):
        logger.error(
            f"AppException: {exc.error_code}",
            extra=build_error_report(exc.error_code, exc.message, exc.exit_code, exc.details, command)
        )
        return exc.exit_code

    logger.critical(
        f"UNHANDLED EXCEPTION: {type(exc).__name__}",
        extra={
            "exception_type": type(exc).__name__,
            "exception_message": str(exc),
            "command": command,
            "traceback": traceback.format_exc()
        },
        exc_info=True
    )
    return EXIT_GENERIC


# ============== Decorator for Stage Functions ==============

def handle_errors(stage_name: str = "Stage"):
    """Decorator to wrap pipeline stages with error handling"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except AppException:
                raise
            except OSError as e:
                logger.error(f"{stage_name} I/O error in {func.__name__}: {e}", exc_info=True)
                raise StorageError(
                    f"{stage_name}: {e}",
                    details={"path": getattr(e, "filename", None), "errno": e.errno}
                )
            except Exception as e:
                logger.error(
                    f"{stage_name} error in {func.__name__}: {str(e)}",
                    exc_info=True
                )
                raise AppException(
                    f"{stage_name}: operation failed: {str(e)}",
                    details={"exception_type": type(e).__name__}
                )
        return wrapper
    return decorator
