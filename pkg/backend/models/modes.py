"""
Mode bookkeeping: polarization families, mode indices and per-segment amplitudes.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from core.exceptions import DomainError


class Polarization(str, Enum):
    """Transverse-electric / transverse-magnetic mode families."""
    TE = "TE"
    TM = "TM"


@dataclass(frozen=True, order=True)
class ModeIndex:
    """(n, m, polarization) with n >= 1 and |m| <= n."""
    n: int
    m: int
    pol: Polarization

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"Mode order must be >= 1, got {self.n}", error_code="mode_order")
        if abs(self.m) > self.n:
            raise DomainError(
                f"Azimuthal index {self.m} out of range for order {self.n}",
                error_code="mode_azimuth",
            )
        if not isinstance(self.pol, Polarization):
            object.__setattr__(self, "pol", Polarization(self.pol))

    @property
    def nu(self) -> float:
        return float(np.sqrt(self.n * (self.n + 1)))

    def key(self) -> str:
        return f"{self.pol.value}:{self.n}:{self.m}"


@dataclass
class ModeCoefficients:
    """Amplitudes of one mode on consecutive radial segments.

    Segment k spans ``radii[k]..radii[k+1]``; ``amplitudes[k]`` are the
    coefficients of that segment's two fundamental columns. The innermost
    segment has no singular part and the outermost only an outgoing part.
    """
    mode: ModeIndex
    radii: np.ndarray
    amplitudes: np.ndarray
    labels: Tuple[str, ...] = field(default_factory=tuple)

    def segment(self, r: float) -> int:
        idx = int(np.searchsorted(self.radii, r, side="right") - 1)
        return min(max(idx, 0), len(self.amplitudes) - 1)
