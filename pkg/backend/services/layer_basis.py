"""
Fundamental solution pairs of the per-mode radial system.

For a polarization with radial coefficients (a₁, a₂) = (μ, ε) for TE and (ε, μ)
for TM, the state y = (u, w) with u = r·e_v, w = r·h_u (TE) or u = r·h_v,
w = -r·e_u (TM) satisfies

    u' = -iω a₁ w
    w' = i (n(n+1)/(ω a₁ r²) - ω a₂) u

and is continuous across interfaces. Every basis returns both columns for all
orders at once, each column gauge-normalized to be O(r) on its layer.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from core.exceptions import DomainError, IntegrationError
from core.interfaces import ILayerBasis
from models.medium import ConformalRadialTensor, RadialLayer
from models.modes import Polarization
from services.special import MillerOptions, scaled_radial_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorOptions:
    method: str = "DOP853"
    rtol: float = 1e-12
    atol: float = 1e-300


def wavenumber(omega: float, a1: complex, a2: complex) -> complex:
    """ω√(a₁a₂) on the branch with Im k >= 0 (Re k > 0 when real)."""
    k = omega * np.sqrt(complex(a1) * complex(a2))
    if k.imag < 0 or (k.imag == 0 and k.real < 0):
        k = -k
    if k == 0:
        raise DomainError("Zero wavenumber", error_code="zero_wavenumber")
    return complex(k)


def combine(columns: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """Σ_c columns[..., :, c]·coefficients[..., c], skipping zero coefficients.

    Unused columns may be unbounded (singular column at the origin, regular
    column far out); zero coefficients must not turn them into NaN.
    """
    coefficients = np.asarray(coefficients)
    terms = columns * coefficients[..., None, :]
    terms = np.where(coefficients[..., None, :] == 0, 0.0, terms)
    return terms.sum(axis=-1)


def polarization_tensors(layer: RadialLayer, pol: Polarization) -> Tuple[ConformalRadialTensor, ConformalRadialTensor]:
    """(a₁, a₂) tensors of a layer for one polarization."""
    if pol == Polarization.TE:
        return layer.mu, layer.eps
    return layer.eps, layer.mu


class ConstantBasis(ILayerBasis):
    """Closed-form pair in a homogeneous layer: regular column and singular or outgoing column."""

    def __init__(
        self,
        orders: np.ndarray,
        a1: complex,
        a2: complex,
        omega: float,
        r_in: float,
        r_out: float,
        outgoing: bool = False,
        miller: Optional[MillerOptions] = None,
    ):
        self.orders = np.asarray(orders, dtype=int)
        self.a1 = complex(a1)
        self.a2 = complex(a2)
        self.omega = float(omega)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.outgoing = outgoing
        self.miller = miller
        self.k = wavenumber(omega, a1, a2)
        self.regular_gauge, self.singular_gauge = self._gauges()

    def _gauges(self) -> Tuple[float, float]:
        """Radii at which the regular and singular columns are O(r).

        A layer filling all of space has neither; both columns are then pinned
        at the wavelength scale 1/|k|.
        """
        regular = self.r_out if math.isfinite(self.r_out) else self.r_in
        singular = self.r_in if self.r_in > 0 else self.r_out
        if regular > 0 and math.isfinite(singular):
            return regular, singular
        scale = 1.0 / abs(self.k)
        logger.debug(f"Unbounded layer ({self.r_in}, {self.r_out}): gauge fixed at 1/|k| = {scale:g}")
        return scale, scale

    @property
    def kind(self) -> str:
        return "closed_form"

    def columns_many(self, radii) -> np.ndarray:
        """Columns at an array of radii, shape (S, N, 2, 2)."""
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        table = scaled_radial_table(int(self.orders.max()), self.k * radii, self.miller)
        n = self.orders[:, None].astype(float)
        r = radii[None, :]

        with np.errstate(over="ignore", under="ignore"):
            grow = (r / self.regular_gauge) ** n
            decay = (self.singular_gauge / r) ** (n + 1.0)
        jbar = table.jbar[self.orders]
        jric = table.jbar_ric[self.orders]
        if self.outgoing:
            sbar, sric = table.hbar[self.orders], table.hbar_ric[self.orders]
        else:
            sbar, sric = table.ybar[self.orders], table.ybar_ric[self.orders]

        factor = 1j / (self.omega * self.a1)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.empty((radii.size, self.orders.size, 2, 2), dtype=complex)
            out[..., 0, 0] = (r * grow * jbar).T
            out[..., 1, 0] = (factor * grow * jric).T
            out[..., 0, 1] = (r * decay * sbar).T
            out[..., 1, 1] = (factor * decay * sric).T
        return out

    def columns(self, r: float) -> np.ndarray:
        return self.columns_many(r)[0]

    def wronskian(self) -> np.ndarray:
        """det of the unnormalized closed-form pair, -i(2n+1)/(ω a₁ k)."""
        return -1j * (2 * self.orders + 1) / (self.omega * self.a1 * self.k)


class KelvinBasis(ILayerBasis):
    """Pair in a lossless layer a = c (s/r)²: the constant pair for (-c₁, -c₂) evaluated at s²/r."""

    def __init__(
        self,
        orders: np.ndarray,
        c1: complex,
        c2: complex,
        pivot: float,
        omega: float,
        r_in: float,
        r_out: float,
        miller: Optional[MillerOptions] = None,
    ):
        if r_in <= 0 or not math.isfinite(r_out):
            raise DomainError("Conformal layers must be bounded annuli", error_code="conformal_layer")
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.pivot = float(pivot)
        self.image = ConstantBasis(
            orders, -complex(c1), -complex(c2), omega,
            self.pivot**2 / self.r_out, self.pivot**2 / self.r_in, miller=miller,
        )

    @property
    def kind(self) -> str:
        return "pulled_back"

    def columns_many(self, radii) -> np.ndarray:
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        return self.image.columns_many(self.pivot**2 / radii)

    def columns(self, r: float) -> np.ndarray:
        return self.columns_many(r)[0]


class IntegratedBasis(ILayerBasis):
    """Pair obtained by integrating the radial system across a bounded layer.

    Initial data come from a reference closed-form pair. Each column is
    integrated in the direction in which it grows, which keeps the pair well
    conditioned for large orders.
    """

    def __init__(
        self,
        orders: np.ndarray,
        a1: Callable[[float], complex],
        a2: Callable[[float], complex],
        omega: float,
        r_in: float,
        r_out: float,
        reference: ILayerBasis,
        options: Optional[IntegratorOptions] = None,
        name: str = "",
    ):
        if r_in <= 0 or not math.isfinite(r_out):
            raise DomainError("Integrated layers must be bounded annuli", error_code="integrated_layer")
        self.orders = np.asarray(orders, dtype=int)
        self.a1 = a1
        self.a2 = a2
        self.omega = float(omega)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.options = options or IntegratorOptions()
        self.name = name
        self._L = (self.orders * (self.orders + 1)).astype(float)

        start = reference.columns(self.r_in)
        end = reference.columns(self.r_out)
        growth = np.linalg.norm(end, axis=1) / np.linalg.norm(start, axis=1)
        # column index integrated outward for each order
        self.outward_index = np.argmax(growth, axis=1)
        rows = np.arange(self.orders.size)
        y_out0 = start[rows, :, self.outward_index]
        y_in0 = end[rows, :, 1 - self.outward_index]
        y_out0 = y_out0 / np.linalg.norm(y_out0, axis=1, keepdims=True)
        y_in0 = y_in0 / np.linalg.norm(y_in0, axis=1, keepdims=True)

        self._outward, out_scale = self._integrate(y_out0, (self.r_in, self.r_out))
        self._inward, in_scale = self._integrate(y_in0, (self.r_out, self.r_in))
        self._outward_scale = out_scale
        self._inward_scale = in_scale

    @property
    def kind(self) -> str:
        return "integrated"

    def _rhs(self, r: float, y: np.ndarray) -> np.ndarray:
        state = y.reshape(-1, 2)
        a1 = self.a1(r)
        a2 = self.a2(r)
        du = -1j * self.omega * a1 * state[:, 1]
        dw = 1j * (self._L / (self.omega * a1 * r * r) - self.omega * a2) * state[:, 0]
        return np.stack([du, dw], axis=1).ravel()

    def _integrate(self, y0: np.ndarray, span: Tuple[float, float]):
        solution = solve_ivp(
            self._rhs,
            span,
            y0.astype(complex).ravel(),
            method=self.options.method,
            rtol=self.options.rtol,
            atol=self.options.atol,
            dense_output=True,
        )
        if not solution.success:
            logger.error(f"Radial integration failed in layer '{self.name}': {solution.message}")
            raise IntegrationError(
                f"Radial integration failed: {solution.message}",
                error_code="ode_failure",
                details={"layer": self.name, "radius": float(solution.t[-1]), "span": list(span)},
            )
        final = solution.y[:, -1].reshape(-1, 2)
        scale = np.linalg.norm(final, axis=1)
        logger.debug(
            f"Integrated layer '{self.name}' over {span} in {solution.t.size} steps "
            f"({solution.nfev} evaluations)"
        )
        return solution.sol, np.where(scale > 0, scale, 1.0)

    def columns_many(self, radii) -> np.ndarray:
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        outward = self._outward(radii).T.reshape(radii.size, -1, 2) / self._outward_scale[None, :, None]
        inward = self._inward(radii).T.reshape(radii.size, -1, 2) / self._inward_scale[None, :, None]
        out = np.empty((radii.size, self.orders.size, 2, 2), dtype=complex)
        pick = self.outward_index[None, :, None] == 0
        out[..., 0] = np.where(pick, outward, inward)
        out[..., 1] = np.where(pick, inward, outward)
        return out

    def columns(self, r: float) -> np.ndarray:
        return self.columns_many(r)[0]


def layer_profiles(layer: RadialLayer, pol: Polarization, delta: float):
    """(a₁(r), a₂(r)) callables including the loss of a lossy layer."""
    a1_t, a2_t = polarization_tensors(layer, pol)
    loss = 1j * delta if layer.lossy else 0.0
    return (lambda r: a1_t.value(r) + loss), (lambda r: a2_t.value(r) + loss)


def build_layer_basis(
    layer: RadialLayer,
    pol: Polarization,
    delta: float,
    orders: np.ndarray,
    omega: float,
    miller: Optional[MillerOptions] = None,
    integrator: Optional[IntegratorOptions] = None,
    force_ode: bool = False,
) -> ILayerBasis:
    """Pick the evaluation path for one layer."""
    a1_t, a2_t = polarization_tensors(layer, pol)
    loss = 1j * delta if layer.lossy else 0.0
    bounded = layer.r_in > 0 and not layer.is_outermost

    if a1_t.is_constant and a2_t.is_constant:
        closed = ConstantBasis(
            orders, a1_t.coefficient + loss, a2_t.coefficient + loss, omega,
            layer.r_in, layer.r_out, outgoing=layer.is_outermost, miller=miller,
        )
        if not (force_ode and bounded):
            return closed
        reference: ILayerBasis = closed
    elif a1_t.power == 2 and a2_t.power == 2 and a1_t.pivot == a2_t.pivot:
        reference = KelvinBasis(
            orders, a1_t.coefficient, a2_t.coefficient, a1_t.pivot, omega,
            layer.r_in, layer.r_out, miller=miller,
        )
        if loss == 0 and not force_ode:
            return reference
    else:
        if not bounded:
            raise DomainError(
                f"Layer '{layer.name}' has no closed form and is unbounded",
                error_code="unsupported_layer",
            )
        mid = 0.5 * (layer.r_in + layer.r_out)
        reference = ConstantBasis(
            orders, a1_t.value(mid), a2_t.value(mid), omega, layer.r_in, layer.r_out, miller=miller,
        )

    a1, a2 = layer_profiles(layer, pol, delta)
    return IntegratedBasis(
        orders, a1, a2, omega, layer.r_in, layer.r_out, reference,
        options=integrator, name=layer.name,
    )
