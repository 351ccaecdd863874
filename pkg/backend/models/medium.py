"""
Radially layered media and conformally radial material tensors.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from core.exceptions import DomainError


@dataclass(frozen=True)
class ConformalRadialTensor:
    """Scalar multiple of the identity, c·(s/r)^p · I with p in {0, 2}."""
    coefficient: complex
    power: int = 0
    pivot: float = 1.0

    def __post_init__(self):
        if self.power not in (0, 2):
            raise DomainError(f"Unsupported radial power {self.power}", error_code="tensor_power")
        if self.pivot <= 0:
            raise DomainError("Tensor pivot radius must be positive", error_code="tensor_pivot")
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @classmethod
    def constant(cls, value: complex) -> "ConformalRadialTensor":
        return cls(coefficient=value, power=0, pivot=1.0)

    @property
    def is_constant(self) -> bool:
        return self.power == 0

    def value(self, r):
        """Scalar profile at radius r (scalar or array)."""
        r = np.asarray(r, dtype=float)
        if self.power == 0:
            out = np.full(r.shape, self.coefficient, dtype=complex)
        else:
            out = np.asarray(self.coefficient * (self.pivot / r) ** 2, dtype=complex)
        return out if out.ndim else complex(out)

    def tensor(self, x) -> np.ndarray:
        """3×3 tensor(s) at point(s) x of shape (3,) or (P, 3)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        val = np.asarray(self.value(r), dtype=complex)
        return val[..., None, None] * np.eye(3)

    def scaled(self, factor: complex) -> "ConformalRadialTensor":
        return replace(self, coefficient=self.coefficient * factor)


@dataclass(frozen=True)
class RadialLayer:
    """Annulus r_in < |x| < r_out with isotropic coefficients."""
    r_in: float
    r_out: float
    eps: ConformalRadialTensor
    mu: ConformalRadialTensor
    lossy: bool = False
    name: str = ""

    def __post_init__(self):
        if not (self.r_in >= 0 and self.r_out > self.r_in):
            raise DomainError(
                f"Invalid layer radii ({self.r_in}, {self.r_out})",
                error_code="layer_radii",
            )

    @property
    def is_outermost(self) -> bool:
        return math.isinf(self.r_out)


@dataclass(frozen=True)
class LayeredMedium:
    """Concentric layers covering [0, ∞) at angular frequency omega.

    Geometry radii r₂ < r₃ and the band coefficient λ are kept for the
    constructions that need them; a plain layered medium may leave them unset.
    """
    layers: Tuple[RadialLayer, ...]
    omega: float = 1.0
    r2: Optional[float] = None
    r3: Optional[float] = None
    lam: Optional[float] = None
    R0: Optional[float] = None
    label: str = "medium"
    region_radii: Tuple[Tuple[str, float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.omega <= 0:
            raise DomainError("Frequency must be positive", error_code="omega")
        if not self.layers:
            raise DomainError("A medium needs at least one layer", error_code="no_layers")
        if self.layers[0].r_in != 0 or not self.layers[-1].is_outermost:
            raise DomainError("Layers must cover [0, inf)", error_code="layer_cover")
        for inner, outer in zip(self.layers, self.layers[1:]):
            if inner.r_out != outer.r_in:
                raise DomainError(
                    f"Layers are not contiguous at {inner.r_out} / {outer.r_in}",
                    error_code="layer_gap",
                )

    @property
    def interfaces(self) -> Tuple[float, ...]:
        return tuple(layer.r_out for layer in self.layers[:-1])

    @property
    def lossy_layers(self) -> Tuple[int, ...]:
        return tuple(i for i, layer in enumerate(self.layers) if layer.lossy)

    @property
    def has_lossy_layer(self) -> bool:
        return bool(self.lossy_layers)

    def layer_index(self, r: float, side: Optional[str] = None, tolerance: float = 1e-12) -> int:
        """Index of the layer containing r.

        On an interface ``side`` selects the layer: "inner" (default) or "outer".
        """
        if r < 0:
            raise DomainError(f"Negative radius {r}", error_code="negative_radius")
        for i, radius in enumerate(self.interfaces):
            if abs(r - radius) <= tolerance * max(1.0, radius):
                return i + 1 if side == "outer" else i
            if r < radius:
                return i
        return len(self.layers) - 1

    def on_interface(self, r: float, tolerance: float = 1e-12) -> bool:
        return any(abs(r - radius) <= tolerance * max(1.0, radius) for radius in self.interfaces)

    def region(self, name: str) -> Tuple[float, float]:
        for region_name, r_in, r_out in self.region_radii:
            if region_name == name:
                return r_in, r_out
        raise DomainError(f"Unknown region '{name}'", error_code="unknown_region",
                          details={"available": [r[0] for r in self.region_radii]})
