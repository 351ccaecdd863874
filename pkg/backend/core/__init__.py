"""
Core module containing interfaces and exceptions; the service container lives in core.container.
"""

from .interfaces import IFieldSolution, ILayerBasis, IRadialMap, IResultWriter
from .exceptions import (
    AppException,
    ConfigurationError,
    DomainError,
    IndeterminateError,
    IntegrationError,
    NumericalError,
    RefusalError,
    ResonanceError,
    StorageError,
    ValidationError,
)

__all__ = [
    "IFieldSolution",
    "ILayerBasis",
    "IRadialMap",
    "IResultWriter",
    "AppException",
    "ConfigurationError",
    "DomainError",
    "IndeterminateError",
    "IntegrationError",
    "NumericalError",
    "RefusalError",
    "ResonanceError",
    "StorageError",
    "ValidationError",
]
