"""
Sources supported on spheres: surface currents given by mode data and point dipoles.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from core.exceptions import DomainError
from models.modes import ModeIndex, Polarization


class SourceKind(str, Enum):
    SURFACE_CURRENT = "surface_current"
    POINT_DIPOLE = "point_dipole"


class CurrentFlavor(str, Enum):
    """Electric currents drive the H-jump, magnetic currents the E-jump."""
    ELECTRIC = "electric"
    MAGNETIC = "magnetic"


@dataclass(frozen=True)
class SphericalSource:
    """A current supported on the sphere |x| = radius.

    Surface currents carry one complex amplitude per mode: the tangential
    density component that couples to that mode (the V-component for TE and the
    U-component for TM when electric, the reverse when magnetic). Point dipoles
    sit at ``radius·direction`` with a Cartesian moment.
    """
    kind: SourceKind
    radius: float
    modes: Tuple[Tuple[ModeIndex, complex], ...] = field(default_factory=tuple)
    flavor: CurrentFlavor = CurrentFlavor.ELECTRIC
    moment: Tuple[complex, complex, complex] = (0j, 0j, 0j)
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    label: str = ""

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"Source radius must be positive, got {self.radius}", error_code="source_radius")
        direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise DomainError("Dipole direction must be non-zero", error_code="source_direction")
        object.__setattr__(self, "direction", tuple(float(c) for c in direction / norm))
        object.__setattr__(self, "moment", tuple(complex(c) for c in self.moment))

    @classmethod
    def surface_current(
        cls,
        radius: float,
        amplitudes: Dict[ModeIndex, complex],
        flavor: CurrentFlavor = CurrentFlavor.ELECTRIC,
        label: str = "",
    ) -> "SphericalSource":
        modes = tuple(sorted((mode, complex(a)) for mode, a in amplitudes.items()))
        return cls(kind=SourceKind.SURFACE_CURRENT, radius=radius, modes=modes, flavor=flavor, label=label)

    @classmethod
    def point_dipole(
        cls,
        radius: float,
        moment,
        direction=(0.0, 0.0, 1.0),
        label: str = "",
    ) -> "SphericalSource":
        return cls(
            kind=SourceKind.POINT_DIPOLE,
            radius=radius,
            moment=tuple(moment),
            direction=tuple(direction),
            label=label,
        )

    @property
    def position(self) -> np.ndarray:
        return self.radius * np.asarray(self.direction)

    @property
    def amplitudes(self) -> Dict[ModeIndex, complex]:
        return dict(self.modes)

    @property
    def is_finite(self) -> bool:
        """True when the source excites a finite, explicitly listed mode set."""
        return self.kind == SourceKind.SURFACE_CURRENT

    @property
    def on_axis(self) -> bool:
        return abs(abs(self.direction[2]) - 1.0) < 1e-15

    @property
    def max_order(self) -> Optional[int]:
        if self.kind == SourceKind.SURFACE_CURRENT:
            return max((mode.n for mode, _ in self.modes), default=0)
        return None

    def polarizations(self) -> Tuple[Polarization, ...]:
        if self.kind == SourceKind.POINT_DIPOLE:
            return (Polarization.TE, Polarization.TM)
        return tuple(sorted({mode.pol for mode, _ in self.modes}, key=lambda p: p.value))

    def is_zero(self) -> bool:
        if self.kind == SourceKind.SURFACE_CURRENT:
            return all(a == 0 for _, a in self.modes)
        return all(c == 0 for c in self.moment)

    def relocated(self, radius: float, factor: complex = 1.0) -> "SphericalSource":
        """Same angular data on another sphere, amplitudes multiplied by factor."""
        if self.kind == SourceKind.SURFACE_CURRENT:
            modes = tuple((mode, a * factor) for mode, a in self.modes)
            return replace(self, radius=radius, modes=modes)
        return replace(self, radius=radius, moment=tuple(c * factor for c in self.moment))
