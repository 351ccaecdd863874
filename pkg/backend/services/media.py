"""
Lossy coefficients, named regions and the dissipated power.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from core.exceptions import DomainError
from models.medium import LayeredMedium

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossyCoefficients:
    """ε_δ, μ_δ of a layered medium: +iδ on the lossy layers, unchanged elsewhere."""
    medium: LayeredMedium
    delta: float

    def _value(self, which: str, r, side: Optional[str]) -> complex:
        layer = self.medium.layers[self.medium.layer_index(float(r), side)]
        tensor = layer.eps if which == "eps" else layer.mu
        return tensor.value(float(r)) + (1j * self.delta if layer.lossy else 0.0)

    def eps(self, r, side: Optional[str] = None):
        """Scalar ε_δ at radius r (scalar or array)."""
        if np.ndim(r):
            return np.array([self._value("eps", x, side) for x in np.asarray(r).ravel()]).reshape(np.shape(r))
        return self._value("eps", r, side)

    def mu(self, r, side: Optional[str] = None):
        if np.ndim(r):
            return np.array([self._value("mu", x, side) for x in np.asarray(r).ravel()]).reshape(np.shape(r))
        return self._value("mu", r, side)

    def eps_tensor(self, x, side: Optional[str] = None) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return np.asarray(self.eps(r, side))[..., None, None] * np.eye(3)

    def mu_tensor(self, x, side: Optional[str] = None) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return np.asarray(self.mu(r, side))[..., None, None] * np.eye(3)

    def layer_constants(self) -> Tuple[Tuple[str, complex, complex], ...]:
        """(name, ε coefficient, μ coefficient) per layer, loss included."""
        rows = []
        for layer in self.medium.layers:
            loss = 1j * self.delta if layer.lossy else 0.0
            rows.append((layer.name, layer.eps.coefficient + loss, layer.mu.coefficient + loss))
        return tuple(rows)


def with_loss(medium: LayeredMedium, delta: float) -> LossyCoefficients:
    if delta < 0:
        raise DomainError(f"Loss parameter must be non-negative, got {delta}", error_code="negative_delta")
    return LossyCoefficients(medium=medium, delta=float(delta))


def region_table(medium: LayeredMedium) -> Dict[str, Tuple[float, float]]:
    """Named annuli of a medium; layer names are used when no table was attached."""
    if medium.region_radii:
        return {name: (r_in, r_out) for name, r_in, r_out in medium.region_radii}
    return {layer.name or f"layer_{i}": (layer.r_in, layer.r_out) for i, layer in enumerate(medium.layers)}


def power(fields, delta: Optional[float] = None, region: Optional[Union[str, Tuple[float, float]]] = None) -> float:
    """δ·‖(E, H)‖² over a region.

    Without a region this is the dissipated power P_δ of the lossy shell, which
    is 0 for a medium without a lossy layer. An explicit region is always
    integrated, lossy or not.
    """
    delta = fields.delta if delta is None else delta
    if delta < 0:
        raise DomainError(f"Loss parameter must be non-negative, got {delta}", error_code="negative_delta")
    if delta == 0:
        return 0.0
    if region is None:
        if not fields.medium.has_lossy_layer:
            return 0.0
        region = "shell"
    return delta * fields.norm_squared(region)


def mode_norm_weight(n, R: float) -> np.ndarray:
    """(n+1)·R^{2n+1}: squared L² norm over B_R of a unit free mode to leading order in R."""
    return np.exp(log_mode_norm_weight(n, R))


def log_mode_norm_weight(n, R: float) -> np.ndarray:
    if R <= 0:
        raise DomainError(f"Ball radius must be positive, got {R}", error_code="radius")
    n = np.asarray(n, dtype=float)
    return np.log(n + 1.0) + (2.0 * n + 1.0) * math.log(R)
