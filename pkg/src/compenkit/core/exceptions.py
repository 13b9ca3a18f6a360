"""
Exception hierarchy for compenkit.

Every error raised on purpose by the library derives from CompenKitError and
also from the builtin exception it specializes, so callers can catch either
``InvalidShapeError`` or a plain ``ValueError``. The optional ``details``
mapping is passed straight into structured log events.
"""

from typing import Any, Optional


class CompenKitError(Exception):
    """Base class for all compenkit errors."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: dict[str, Any] = details

    def __str__(self) -> str:
        if not self.details:
            return self.message
        context = ", ".join(f"{key}={value}" for key, value in self.details.items())
        return f"{self.message} ({context})"


class InvalidShapeError(CompenKitError, ValueError):
    """Tensor or image shapes are incompatible with the requested operation."""


class InvalidArgumentError(CompenKitError, ValueError):
    """A scalar argument is outside its allowed range."""


class DegenerateConfigurationError(CompenKitError, ValueError):
    """A geometric configuration produced a singular linear system."""


class NonFiniteError(CompenKitError, FloatingPointError):
    """A forward operation produced NaN or Inf values."""


class TrainingDivergedError(CompenKitError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, message: str, iteration: int, **details: Any):
        super().__init__(message, iteration=iteration, **details)
        self.iteration = iteration


class DatasetError(CompenKitError, OSError):
    """A dataset directory, manifest or image file is missing or malformed."""

    def __init__(self, message: str, path: Optional[str] = None, **details: Any):
        if path is not None:
            details["path"] = path
        super().__init__(message, **details)
        self.path = path
