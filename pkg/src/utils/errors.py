"""
Error Types

Every failure raised by the toolkit derives from RcfmError so callers (and the
command line) can tell library errors apart from programming errors.
"""

from typing import Optional


class RcfmError(Exception):
    """Base class for all toolkit errors."""


class DataError(RcfmError, ValueError):
    """Malformed input data, shape mismatch or invalid parameter."""


class ConfigError(RcfmError, ValueError):
    """Configuration file failed validation."""


class TrainingError(RcfmError, ArithmeticError):
    """Gradient descent produced a non-finite loss."""


class StageError(RcfmError):
    """
    Error raised inside a named pipeline stage.

    The original error is chained as ``__cause__``; ``stage`` names where it
    happened (e.g. ``combine_weights`` or ``kmeans @ street``).
    """

    def __init__(self, stage: str, message: str, cause: Optional[BaseException] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.cause = cause
