"""
Exception types raised across the package and the decorator used to wrap
pipeline steps with consistent error logging.
"""

import logging
from functools import wraps


logger = logging.getLogger(__name__)

class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""

class OracleScaleError(ValueError):
    """Exponential enumeration was requested for a family that is too large."""

class CalibrationRangeError(ValueError):
    """A calibrated critical-value family was queried beyond its table."""

class ProcedureError(ValueError):
    """A discovery procedure produced a bound outside [0, |S|]."""

class InputFileError(ValueError):
    """A p-value, query or table file could not be parsed."""

class CalibrationError(RuntimeError):
    """Monte Carlo calibration could not bracket the critical constant."""

def handle_errors(method):
    """
    Decorator to wrap pipeline steps for error handling.

    Raises:
        MemoryError: If the step exhausts memory.
        ValueError: Validation errors are logged and re-raised unchanged.
        OSError: File system errors are logged and re-raised unchanged.
        RuntimeError: For any other errors encountered during the step.

    Returns:
        the original method's result if successful.
    """
    @wraps(method)
    def wrapper(*args, **kwargs):
        try:
            return method(*args, **kwargs)
        except MemoryError as e:
            logger.error("Memory error in %s: %s", method.__name__, e)
            raise
        except (ValueError, CalibrationError, OSError) as e:
            logger.error("Error in %s: %s", method.__name__, e)
            raise
        except Exception as e:
            logger.error("Error in %s: %s", method.__name__, e)
            raise RuntimeError(f"{method.__name__} failed: {e}") from e
    return wrapper
