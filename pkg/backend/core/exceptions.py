"""
Custom exception classes for the application.
"""

from typing import Any, Dict


class AppException(Exception):
    """Base exception for application errors."""

    exit_code = 3

    def __init__(self, message: str, error_code: str = None, details: dict = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}

    def to_record(self) -> Dict[str, Any]:
        """JSON-ready error record."""
        return {
            "type": type(self).__name__,
            "message": self.message,
            "error_code": self.error_code,
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return str(value)


class ConfigurationError(AppException):
    """Raised when there's a configuration error."""
    exit_code = 2


class ValidationError(AppException):
    """Raised when validation fails."""
    exit_code = 2


class DomainError(AppException):
    """Raised when an argument lies outside the mathematical domain of an operation."""
    exit_code = 2


class RefusalError(ValidationError):
    """Raised when an operation's hypotheses do not hold for its input."""
    pass


class IndeterminateError(ValidationError):
    """Raised when a radius of convergence cannot be estimated from the data."""
    pass


class NumericalError(AppException):
    """Raised when a numerical procedure fails."""
    pass


class ResonanceError(NumericalError):
    """Raised when a per-mode transmission problem is singular."""
    pass


class IntegrationError(NumericalError):
    """Raised when the radial ODE integrator fails."""
    pass


class StorageError(AppException):
    """Raised when storage operations fail."""
    pass
