"""
Normalized spherical Bessel functions and vector spherical harmonics.

Radial functions are normalized so that

    ĵ_n(z) = (2n+1)!! j_n(z)    ~ zⁿ        (small z)
    ŷ_n(z) = -y_n(z)/(2n-1)!!   ~ z^{-n-1}  (small z)

and the solver only ever touches the scaled mantissas

    j̄_n = ĵ_n / zⁿ,   ȳ_n = ŷ_n z^{n+1},   h̄_n = ĥ_n z^{n+1},

with ĥ_n = ŷ_n + i ĵ_n / ((2n+1)!!(2n-1)!!) the outgoing function
(h_n^{(1)} = -i (2n-1)!! ĥ_n). Riccati derivatives carry the same scale factors:
(zĵ_n)' = zⁿ j̄'_n and (zŷ_n)' = z^{-n-1} ȳ'_n.

j̄ comes from a downward (Miller) recurrence normalized against closed forms,
ȳ from the upward recurrence; both are vectorised over the argument array.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, sph_harm_y

from core.exceptions import DomainError

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass(frozen=True)
class MillerOptions:
    """Start-index policy and overflow guard for the downward recurrence."""
    padding: int = 64
    cube_root_factor: float = 8.0
    rescale_threshold: float = 1e250

    @classmethod
    def from_settings(cls, settings) -> "MillerOptions":
        section = settings.section("special")
        return cls(
            padding=int(getattr(section, "miller_padding", 64)),
            cube_root_factor=float(getattr(section, "miller_cube_root_factor", 8.0)),
            rescale_threshold=float(getattr(section, "rescale_threshold", 1e250)),
        )


DEFAULT_MILLER = MillerOptions()


def log_odd_double_factorial(n) -> np.ndarray:
    """ln((2n+1)!!) for n >= 0."""
    n = np.asarray(n, dtype=float)
    return gammaln(2.0 * n + 2.0) - n * LN2 - gammaln(n + 1.0)


def log_prev_double_factorial(n) -> np.ndarray:
    """ln((2n-1)!!) for n >= 0, with (-1)!! = 1."""
    n = np.asarray(n, dtype=float)
    return gammaln(2.0 * n + 1.0) - n * LN2 - gammaln(n + 1.0)


@dataclass(frozen=True)
class ScaledRadialTable:
    """Scaled radial functions for orders 0..n_max, rows indexed by order."""
    z: np.ndarray
    orders: np.ndarray
    jbar: np.ndarray
    jbar_ric: np.ndarray
    ybar: np.ndarray
    ybar_ric: np.ndarray
    hbar: np.ndarray
    hbar_ric: np.ndarray

    @property
    def n_max(self) -> int:
        return int(self.orders[-1])


@dataclass(frozen=True)
class NormalizedRadialPair:
    """ĵ_n, ŷ_n, ĥ_n and their Riccati derivatives at one order."""
    n: int
    z: complex
    j_hat: complex
    y_hat: complex
    h_hat: complex
    j_ric: complex
    y_ric: complex
    h_ric: complex

    @property
    def wronskian(self) -> complex:
        """ĵ ŷ' − ŷ ĵ' recovered from the Riccati derivatives."""
        return (self.j_hat * self.y_ric - self.y_hat * self.j_ric) / self.z


@dataclass(frozen=True)
class AngularBasisSample:
    """Y (…, P), U and V (…, P, 3) at P unit directions."""
    Y: np.ndarray
    U: np.ndarray
    V: np.ndarray


def _as_argument(z) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(arr == 0):
        raise DomainError("Radial functions are not defined at z = 0", error_code="zero_argument")
    if np.any(np.abs(arr.imag) > 700.0):
        raise DomainError(
            "Argument imaginary part exceeds the representable range",
            error_code="argument_range",
            details={"max_imag": float(np.max(np.abs(arr.imag)))},
        )
    return arr


def _jbar_closed_forms(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """j̄_0 = sin z / z and j̄_1 = 3 j_1(z)/z, with a series for small |z|."""
    jbar0 = np.sin(z) / z
    small = np.abs(z) < 0.1
    jbar1 = np.empty_like(z)
    zz = z[~small]
    jbar1[~small] = 3.0 * (np.sin(zz) - zz * np.cos(zz)) / zz**3
    z2 = z[small] ** 2
    jbar1[small] = 1.0 - z2 / 10.0 + z2**2 / 280.0 - z2**3 / 15120.0 + z2**4 / 1330560.0
    return jbar0, jbar1


def _miller_jbar(n_max: int, z: np.ndarray, options: MillerOptions) -> np.ndarray:
    """j̄_k for k = -1..n_max (row k+1) by downward recurrence, n_max >= 1."""
    zmax = float(np.max(np.abs(z)))
    start = int(max(n_max, zmax) + options.cube_root_factor * np.cbrt(zmax) + options.padding)
    z2 = z * z

    out = np.zeros((n_max + 2, z.size), dtype=complex)
    upper = np.zeros_like(z)
    current = np.ones_like(z)

    for n in range(start, -1, -1):
        lower = current - z2 * upper / ((2 * n + 1) * (2 * n + 3))
        upper, current = current, lower
        if n - 1 <= n_max:
            out[n] = current

        magnitude = np.abs(current)
        if np.any(magnitude > options.rescale_threshold):
            scale = np.where(magnitude > options.rescale_threshold, 1.0 / magnitude, 1.0)
            upper = upper * scale
            current = current * scale
            out[n:] *= scale[None, :]

    jbar0, jbar1 = _jbar_closed_forms(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(np.abs(jbar0) >= np.abs(jbar1), jbar0 / out[1], jbar1 / out[2])
    return out * factor[None, :]


def _ybar_upward(n_max: int, z: np.ndarray) -> np.ndarray:
    """ȳ_k for k = -1..n_max (row k+1) by upward recurrence."""
    out = np.empty((n_max + 2, z.size), dtype=complex)
    out[0] = np.sin(z) / z
    out[1] = np.cos(z)
    z2 = z * z
    for n in range(0, n_max):
        out[n + 2] = out[n + 1] - z2 * out[n] / (4.0 * n * n - 1.0)
    return out


def _outgoing_weight(orders: np.ndarray, log_z: np.ndarray, values: np.ndarray) -> np.ndarray:
    """i zⁿ⁺ⁿ⁺¹ values / ((2n+1)!!(2n-1)!!) evaluated in log space."""
    log_d = log_odd_double_factorial(orders) + log_prev_double_factorial(orders)
    exponent = (2.0 * orders[:, None] + 1.0) * log_z[None, :] - log_d[:, None]
    result = np.zeros_like(values)
    nonzero = values != 0
    with np.errstate(over="ignore"):
        result[nonzero] = np.exp(np.log(values[nonzero]) + exponent[nonzero])
    return 1j * result


def scaled_radial_table(
    n_max: int,
    z,
    options: Optional[MillerOptions] = None,
) -> ScaledRadialTable:
    """All scaled radial functions for orders 0..n_max at an array of arguments."""
    if n_max < 0:
        raise DomainError(f"Order must be non-negative, got {n_max}", error_code="negative_order")
    options = options or DEFAULT_MILLER
    z = _as_argument(z)
    orders = np.arange(n_max + 1)

    jb = _miller_jbar(max(n_max, 1), z, options)[: n_max + 2]
    yb = _ybar_upward(n_max, z)

    jbar = jb[1:]
    ybar = yb[1:]
    nn = orders[:, None].astype(float)
    jbar_ric = (2.0 * nn + 1.0) * jb[:-1] - nn * jbar
    ybar_ric = (z * z)[None, :] * yb[:-1] / (2.0 * nn - 1.0) - nn * ybar

    log_z = np.log(z)
    hbar = ybar + _outgoing_weight(orders, log_z, jbar)
    hbar_ric = ybar_ric + _outgoing_weight(orders, log_z, jbar_ric)

    return ScaledRadialTable(
        z=z,
        orders=orders,
        jbar=jbar,
        jbar_ric=jbar_ric,
        ybar=ybar,
        ybar_ric=ybar_ric,
        hbar=hbar,
        hbar_ric=hbar_ric,
    )


def eval_radial_pair(n: int, z: complex, options: Optional[MillerOptions] = None) -> NormalizedRadialPair:
    """ĵ_n(z), ŷ_n(z), ĥ_n(z) and Riccati derivatives.

    Values are rescaled from the mantissas; they overflow to inf only when the
    mathematical value itself exceeds the double range.
    """
    if n < 0:
        raise DomainError(f"Order must be non-negative, got {n}", error_code="negative_order")
    table = scaled_radial_table(n, z, options)
    zc = table.z[0]
    log_z = np.log(zc)
    with np.errstate(over="ignore", invalid="ignore"):
        up = np.exp(n * log_z)
        down = np.exp(-(n + 1) * log_z)
    return NormalizedRadialPair(
        n=n,
        z=complex(zc),
        j_hat=complex(up * table.jbar[n, 0]),
        y_hat=complex(down * table.ybar[n, 0]),
        h_hat=complex(down * table.hbar[n, 0]),
        j_ric=complex(up * table.jbar_ric[n, 0]),
        y_ric=complex(down * table.ybar_ric[n, 0]),
        h_ric=complex(down * table.hbar_ric[n, 0]),
    )


def spherical_angles(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Polar and azimuthal angles of (P, 3) direction vectors."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(directions, axis=-1)
    if np.any(norms == 0):
        raise DomainError("Direction vectors must be non-zero", error_code="zero_direction")
    unit = directions / norms[:, None]
    theta = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
    phi = np.arctan2(unit[:, 1], unit[:, 0])
    return theta, phi


def _harmonic(n: np.ndarray, m: np.ndarray, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    valid = np.abs(m) <= n
    safe_m = np.where(valid, m, 0)
    values = sph_harm_y(n, safe_m, theta, phi)
    return np.where(valid, values, 0.0)


def angular_basis(n, m, directions) -> AngularBasisSample:
    """Orthonormal Y_n^m, U_n^m = ∇_S Y/√(n(n+1)) and V_n^m = x̂ × U_n^m.

    ``n`` and ``m`` are broadcast against each other (shape K); the result has
    shape (K, P) for Y and (K, P, 3) for U, V. V is built from angular-momentum
    ladder operators, V = i L Y / √(n(n+1)), so nothing is singular at the poles.
    """
    n, m = np.broadcast_arrays(np.atleast_1d(np.asarray(n, dtype=int)), np.atleast_1d(np.asarray(m, dtype=int)))
    if np.any(n < 1):
        raise DomainError("Vector harmonics need n >= 1", error_code="order_too_small")
    if np.any(np.abs(m) > n):
        raise DomainError("Azimuthal index must satisfy |m| <= n", error_code="azimuthal_range")

    theta, phi = spherical_angles(directions)
    nn = n[:, None]
    mm = m[:, None]
    th = theta[None, :]
    ph = phi[None, :]

    Y = _harmonic(nn, mm, th, ph)
    raise_coef = np.sqrt(((nn - mm) * (nn + mm + 1)).astype(float))
    lower_coef = np.sqrt(((nn + mm) * (nn - mm + 1)).astype(float))
    l_plus = raise_coef * _harmonic(nn, mm + 1, th, ph)
    l_minus = lower_coef * _harmonic(nn, mm - 1, th, ph)

    LY = np.stack([(l_plus + l_minus) / 2.0, (l_plus - l_minus) / 2.0j, mm * Y], axis=-1)
    nu = np.sqrt((nn * (nn + 1)).astype(float))[..., None]
    V = 1j * LY / nu

    xhat = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
    U = np.cross(V, np.broadcast_to(xhat[None, :, :], V.shape))
    return AngularBasisSample(Y=Y, U=U, V=V)


def eval_angular_basis(n: int, m: int, direction) -> AngularBasisSample:
    """Single-mode, single-direction view of :func:`angular_basis`."""
    sample = angular_basis(n, m, np.asarray(direction, dtype=float).reshape(1, 3))
    return AngularBasisSample(Y=sample.Y[0, 0], U=sample.U[0, 0], V=sample.V[0, 0])


def sphere_quadrature(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos θ times a uniform azimuthal rule.

    Integrates band-limited functions up to degree 2·order − 1 exactly.
    """
    if order < 1:
        raise DomainError("Quadrature order must be positive", error_code="quadrature_order")
    nodes, weights = leggauss(order)
    n_phi = 2 * order
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    cos_t = np.repeat(nodes, n_phi)
    sin_t = np.sqrt(1.0 - cos_t**2)
    ph = np.tile(phi, order)
    points = np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), cos_t], axis=-1)
    w = np.repeat(weights, n_phi) * (2.0 * np.pi / n_phi)
    return points, w
