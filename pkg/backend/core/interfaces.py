"""
Interface definitions for the numerical services.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np


class IRadialMap(ABC):
    """Interface for smooth maps used to push media, fields and sources forward."""

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """Map points of shape (3,) or (P, 3)."""
        pass

    @abstractmethod
    def inverse(self, y: np.ndarray) -> np.ndarray:
        """Inverse map of points of shape (3,) or (P, 3)."""
        pass

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """∇T at points, shape (3, 3) or (P, 3, 3)."""
        pass

    @property
    @abstractmethod
    def orientation(self) -> int:
        """Sign of det ∇T (constant on the map's domain)."""
        pass

    @property
    def is_radial(self) -> bool:
        return False

    def radial(self, r: float) -> float:
        """|T(x)| for |x| = r, defined for radial maps."""
        raise NotImplementedError(f"{type(self).__name__} is not a radial map")


class ILayerBasis(ABC):
    """Interface for fundamental solution pairs of the per-mode radial system."""

    r_in: float
    r_out: float

    @abstractmethod
    def columns(self, r: float) -> np.ndarray:
        """States of both columns for every order, shape (N, 2, 2) = (order, state, column)."""
        pass

    @property
    @abstractmethod
    def kind(self) -> str:
        """Short label of the evaluation path (closed form, pulled back, integrated)."""
        pass


class IFieldSolution(ABC):
    """Interface for per-mode field solutions on a layered medium."""

    @abstractmethod
    def states(self, polarization: Any, r: float, side: Optional[str] = None) -> np.ndarray:
        """Radial states (u, w) for every active (n, m), shape (N, M, 2)."""
        pass

    @abstractmethod
    def field_at(self, points: np.ndarray, side: Optional[str] = None) -> Dict[str, np.ndarray]:
        """E and H at Cartesian points."""
        pass


class IResultWriter(ABC):
    """Interface for result artefact output."""

    @abstractmethod
    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write a CSV table."""
        pass

    @abstractmethod
    def write_json(self, filename: str, data: Dict[str, Any]) -> Path:
        """Write a JSON document."""
        pass

    @abstractmethod
    def write_svg(self, filename: str, content: str) -> Path:
        """Write an SVG document."""
        pass

    @abstractmethod
    def written(self) -> List[Path]:
        """Files written so far."""
        pass
