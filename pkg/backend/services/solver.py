"""
Spectral transmission solver for sphere-supported sources in layered media.

Per polarization and order the solver builds, once per (medium, δ), the
solution regular at the origin propagated outward and the radiating solution
propagated inward (2×2 Cramer solves at every interface, per-layer log scales
kept apart from normalized coefficients). A source sphere at r_s imposes a state
jump j; the field is A·y_in below r_s and B·y_out above it with
B·y_out(r_s) − A·y_in(r_s) = j. Fields of several source spheres superpose.
"""

import asyncio
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad_vec

from config import Settings
from core.exceptions import DomainError, RefusalError, ResonanceError
from core.interfaces import IFieldSolution, ILayerBasis
from models.medium import ConformalRadialTensor, LayeredMedium, RadialLayer
from models.modes import ModeCoefficients, ModeIndex, Polarization
from models.source import CurrentFlavor, SourceKind, SphericalSource
from services.layer_basis import (
    IntegratorOptions,
    build_layer_basis,
    combine,
    polarization_tensors,
    wavenumber,
)
from services.special import MillerOptions, angular_basis, scaled_radial_table

logger = logging.getLogger(__name__)

Region = Union[str, Tuple[float, float]]
SourcesLike = Union[SphericalSource, Sequence[SphericalSource]]

POLARIZATIONS = (Polarization.TE, Polarization.TM)


@dataclass(frozen=True)
class TruncationPolicy:
    """N_max = max(n_floor, ⌈C·ln(1/δ)/ln(r₃/r₂)⌉), then grown until the tail is small."""
    n_floor: int = 12
    safety_factor: float = 2.0
    tail_window: int = 5
    tail_tolerance: float = 1e-6
    growth_factor: float = 1.5
    n_cap: int = 400
    # relative half-width of the neighbourhood of a source sphere left out of default tail regions
    source_margin: float = 0.25


@dataclass(frozen=True)
class SolverOptions:
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    miller: MillerOptions = field(default_factory=MillerOptions)
    quad_epsrel: float = 1e-10
    quad_epsabs: float = 0.0
    quad_limit: int = 4000
    singular_tolerance: float = 1e-13
    source_exclusion: float = 0.02
    interface_tolerance: float = 1e-12
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)

    @classmethod
    def from_settings(cls, settings: Settings) -> "SolverOptions":
        config = settings.section("solver")
        trunc = getattr(config, "truncation", None)
        policy = TruncationPolicy(
            n_floor=int(getattr(trunc, "n_floor", 12)),
            safety_factor=float(getattr(trunc, "safety_factor", 2.0)),
            tail_window=int(getattr(trunc, "tail_window", 5)),
            tail_tolerance=float(getattr(trunc, "tail_tolerance", 1e-6)),
            growth_factor=float(getattr(trunc, "growth_factor", 1.5)),
            n_cap=int(getattr(trunc, "n_cap", 400)),
            source_margin=float(getattr(trunc, "source_margin", 0.25)),
        ) if trunc is not None else TruncationPolicy()
        return cls(
            integrator=IntegratorOptions(
                method=getattr(config, "ode_method", "DOP853"),
                rtol=float(getattr(config, "ode_rtol", 1e-12)),
                atol=float(getattr(config, "ode_atol", 1e-300)),
            ),
            miller=MillerOptions.from_settings(settings),
            quad_epsrel=float(getattr(config, "quad_epsrel", 1e-10)),
            quad_epsabs=float(getattr(config, "quad_epsabs", 0.0)),
            quad_limit=int(getattr(config, "quad_limit", 4000)),
            singular_tolerance=float(getattr(config, "singular_tolerance", 1e-13)),
            source_exclusion=float(getattr(config, "source_exclusion", 0.02)),
            interface_tolerance=float(getattr(config, "interface_tolerance", 1e-12)),
            truncation=policy,
        )


def _solve2(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cramer solve of (N, 2, 2) systems against (N, 2) right-hand sides."""
    a, b = matrix[:, 0, 0], matrix[:, 0, 1]
    c, d = matrix[:, 1, 0], matrix[:, 1, 1]
    det = a * d - b * c
    x0 = (rhs[:, 0] * d - b * rhs[:, 1]) / det
    x1 = (a * rhs[:, 1] - c * rhs[:, 0]) / det
    return np.stack([x0, x1], axis=1)


def _scaled(amplitude: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """amplitude·exp(log_scale) without overflow in the intermediate."""
    out = np.zeros(np.broadcast(amplitude, log_scale).shape, dtype=complex)
    nonzero = np.broadcast_to(amplitude != 0, out.shape)
    with np.errstate(over="ignore"):
        values = np.exp(np.log(np.where(amplitude != 0, amplitude, 1.0)) + log_scale)
    out[nonzero] = np.broadcast_to(values, out.shape)[nonzero]
    return out


@dataclass(frozen=True)
class ModeResponse:
    """Source-independent regular and radiating solutions for one polarization.

    ``inner[ℓ]``/``outer[ℓ]`` are normalized coefficients in layer ℓ's basis;
    the true amplitudes carry the extra factor exp(``inner_log[ℓ]``).
    """
    medium: LayeredMedium
    delta: float
    pol: Polarization
    orders: np.ndarray
    bases: Tuple[ILayerBasis, ...]
    inner: np.ndarray
    inner_log: np.ndarray
    outer: np.ndarray
    outer_log: np.ndarray

    def inner_state(self, layer: int, r: float) -> np.ndarray:
        return combine(self.bases[layer].columns(r), self.inner[layer])

    def outer_state(self, layer: int, r: float) -> np.ndarray:
        return combine(self.bases[layer].columns(r), self.outer[layer])


@dataclass(frozen=True)
class SourceCoupling:
    """Amplitudes of one source sphere: A below (regular side), B above (radiating side)."""
    source: SphericalSource
    pol: Polarization
    layer: int
    azimuths: np.ndarray
    inner_amplitude: np.ndarray
    outer_amplitude: np.ndarray


def local_coefficient(medium: LayeredMedium, delta: float, pol: Polarization, r: float,
                      side: Optional[str] = None, which: str = "a1") -> complex:
    layer = medium.layers[medium.layer_index(r, side)]
    a1_t, a2_t = polarization_tensors(layer, pol)
    tensor = a1_t if which == "a1" else a2_t
    return tensor.value(r) + (1j * delta if layer.lossy else 0.0)


def source_jumps(
    source: SphericalSource,
    pol: Polarization,
    orders: np.ndarray,
    medium: LayeredMedium,
    delta: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """(azimuths (M,), state jumps (N, M, 2)) imposed by a source on one polarization."""
    N = int(orders[-1])
    r_s = source.radius

    if source.kind == SourceKind.SURFACE_CURRENT:
        selected = [(mode, a) for mode, a in source.modes if mode.pol == pol and mode.n <= N]
        azimuths = np.array(sorted({mode.m for mode, _ in selected}), dtype=int)
        jumps = np.zeros((N, azimuths.size, 2), dtype=complex)
        electric = source.flavor == CurrentFlavor.ELECTRIC
        for mode, a in selected:
            col = int(np.searchsorted(azimuths, mode.m))
            if pol == Polarization.TE:
                jumps[mode.n - 1, col] = (0.0, r_s * a) if electric else (-r_s * a, 0.0)
            else:
                jumps[mode.n - 1, col] = (-r_s * a, 0.0) if electric else (0.0, -r_s * a)
        return azimuths, jumps

    direction = np.asarray(source.direction)
    moment = np.asarray(source.moment, dtype=complex)
    p_r = moment @ direction
    p_t = moment - p_r * direction
    azimuths = np.array([-1, 0, 1]) if source.on_axis else np.arange(-N, N + 1)
    n_grid, m_grid = np.meshgrid(orders, azimuths, indexing="ij")
    valid = np.abs(m_grid) <= n_grid
    basis = angular_basis(n_grid[valid], m_grid[valid], direction[None, :])

    jumps = np.zeros((N, azimuths.size, 2), dtype=complex)
    values = np.zeros((int(valid.sum()), 2), dtype=complex)
    if pol == Polarization.TE:
        K_v = np.conj(basis.V[:, 0, :]) @ p_t / r_s**2
        values[:, 1] = r_s * K_v
    else:
        K_u = np.conj(basis.U[:, 0, :]) @ p_t / r_s**2
        J_r = p_r * np.conj(basis.Y[:, 0]) / r_s**2
        nu = np.sqrt(n_grid[valid] * (n_grid[valid] + 1.0))
        eps_s = local_coefficient(medium, delta, Polarization.TM, r_s)
        values[:, 0] = -r_s * K_u
        values[:, 1] = 1j * nu * J_r / (medium.omega * eps_s)
    jumps[valid] = values
    return azimuths, jumps


class FieldSolutionBase(IFieldSolution):
    """Field evaluation, norms and mode coefficients shared by all solution kinds."""

    medium: LayeredMedium
    delta: float
    orders: np.ndarray
    options: SolverOptions

    def polarizations(self) -> Tuple[Polarization, ...]:
        return POLARIZATIONS

    def azimuths(self, pol: Polarization) -> np.ndarray:
        raise NotImplementedError

    def coefficient(self, pol: Polarization, r: float, side: Optional[str] = None) -> complex:
        return local_coefficient(self.medium, self.delta, pol, r, side)

    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(self.medium.interfaces)

    def source_radii(self) -> Tuple[float, ...]:
        return ()

    def excluded_bands(self) -> List[Tuple[float, float]]:
        return []

    @property
    def omega(self) -> float:
        return self.medium.omega

    @property
    def n_max(self) -> int:
        return int(self.orders[-1]) if self.orders.size else 0

    def _check_point(self, r: float, side: Optional[str]):
        if side is not None:
            return
        tol = self.options.interface_tolerance
        special = list(self.breakpoints()) + list(self.source_radii())
        if any(abs(r - b) <= tol * max(1.0, b) for b in special):
            raise DomainError(
                f"Point at r={r} lies on an interface or source sphere; pass side='inner' or 'outer'",
                error_code="side_required",
            )

    def field_at(self, points, side: Optional[str] = None) -> Dict[str, np.ndarray]:
        """E and H at Cartesian points of shape (P, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        radii = np.linalg.norm(pts, axis=-1)
        if np.any(radii == 0):
            raise DomainError("Fields are not evaluated at the origin", error_code="origin")
        for r in radii:
            self._check_point(float(r), side)
        xhat = pts / radii[:, None]

        E = np.zeros((len(pts), 3), dtype=complex)
        H = np.zeros((len(pts), 3), dtype=complex)
        for pol in self.polarizations():
            ms = self.azimuths(pol)
            if ms.size == 0 or self.orders.size == 0:
                continue
            n_grid, m_grid = np.meshgrid(self.orders, ms, indexing="ij")
            valid = np.abs(m_grid) <= n_grid
            basis = angular_basis(n_grid[valid], m_grid[valid], xhat)
            nu = np.sqrt(n_grid[valid] * (n_grid[valid] + 1.0))
            for p, r in enumerate(radii):
                state = self.states(pol, float(r), side)[valid]
                u, w = state[:, 0], state[:, 1]
                a1 = self.coefficient(pol, float(r), side)
                radial = (1j * nu * u / (self.omega * a1 * r * r)) @ basis.Y[:, p]
                tangential_v = (u / r) @ basis.V[:, p, :]
                tangential_u = (w / r) @ basis.U[:, p, :]
                if pol == Polarization.TE:
                    E[p] += tangential_v
                    H[p] += tangential_u + radial * xhat[p]
                else:
                    H[p] += tangential_v
                    E[p] += -tangential_u - radial * xhat[p]
        return {"E": E, "H": H}

    def _resolve_region(self, region: Region) -> Tuple[float, float]:
        if isinstance(region, str):
            try:
                return self.medium.region(region)
            except DomainError:
                if region == "shell" and self.medium.has_lossy_layer:
                    layers = [self.medium.layers[i] for i in self.medium.lossy_layers]
                    return layers[0].r_in, layers[-1].r_out
                raise
        a, b = float(region[0]), float(region[1])
        if not (0 <= a <= b):
            raise DomainError(f"Invalid region ({a}, {b})", error_code="region")
        return a, b

    def _aligned(self, pol: Polarization, r: float, N: int, ms: np.ndarray) -> np.ndarray:
        out = np.zeros((N, ms.size, 2), dtype=complex)
        own = self.azimuths(pol)
        if own.size == 0 or self.orders.size == 0:
            return out
        cols = np.searchsorted(ms, own)
        n = min(N, self.n_max)
        out[:n, cols] = self.states(pol, r)[:n]
        return out

    def norm_squared(
        self,
        region: Region,
        minus: Optional["FieldSolutionBase"] = None,
        by_mode: bool = False,
    ):
        """∫_region |E|² + |H|² (of self − minus), optionally resolved by order."""
        a, b = self._resolve_region(region)
        if math.isinf(b):
            raise DomainError("Norms need a bounded region", error_code="unbounded_region")

        others = [self] + ([minus] if minus is not None else [])
        N = max(sol.n_max for sol in others)
        pols = self.polarizations()
        ms = {pol: np.union1d(*[sol.azimuths(pol) for sol in others]) if len(others) > 1 else self.azimuths(pol)
              for pol in pols}
        L = np.arange(1, N + 1) * np.arange(2, N + 2).astype(float)

        breaks = set()
        bands: List[Tuple[float, float]] = []
        for sol in others:
            breaks.update(sol.breakpoints())
            breaks.update(sol.source_radii())
            bands.extend(sol.excluded_bands())
        segments = _segments(a, b, sorted(breaks), bands)

        def integrand(r: float) -> np.ndarray:
            rows = []
            for pol in pols:
                mine = self._aligned(pol, r, N, ms[pol])
                a1 = self.coefficient(pol, r)
                radial = mine[..., 0] / a1
                if minus is not None:
                    theirs = minus._aligned(pol, r, N, ms[pol])
                    mine = mine - theirs
                    radial = radial - theirs[..., 0] / minus.coefficient(pol, r)
                density = (
                    np.abs(mine[..., 0]) ** 2
                    + np.abs(mine[..., 1]) ** 2
                    + L[:, None] * np.abs(radial) ** 2 / (self.omega**2 * r * r)
                )
                rows.append(density.sum(axis=1))
            return np.stack(rows)

        total = np.zeros((len(pols), N))
        for lo, hi in segments:
            value, _ = quad_vec(
                integrand, lo, hi,
                epsrel=self.options.quad_epsrel,
                epsabs=max(self.options.quad_epsabs, 1e-300),
                limit=self.options.quad_limit,
            )
            total += np.real(value)

        if by_mode:
            return {pol: total[i] for i, pol in enumerate(pols)}
        return float(total.sum())

    def norm(self, region: Region, minus: Optional["FieldSolutionBase"] = None) -> float:
        return math.sqrt(max(self.norm_squared(region, minus), 0.0))

    def layer_bases(self, pol: Polarization) -> Tuple[ILayerBasis, ...]:
        raise NotImplementedError

    def mode_coefficients(self, mode: ModeIndex) -> ModeCoefficients:
        """Amplitudes of one mode in each layer basis, segment by segment."""
        bases = self.layer_bases(mode.pol)
        ms = self.azimuths(mode.pol)
        radii, labels = self._segment_radii()
        amplitudes = np.zeros((len(radii) - 1, 2), dtype=complex)
        if mode.n > self.n_max or mode.m not in ms:
            return ModeCoefficients(mode=mode, radii=np.asarray(radii), amplitudes=amplitudes, labels=labels)
        col = int(np.searchsorted(ms, mode.m))
        for k, (lo, hi) in enumerate(zip(radii[:-1], radii[1:])):
            mid = _midpoint(lo, hi)
            layer = self.medium.layer_index(mid)
            Phi = bases[layer].columns(mid)[mode.n - 1]
            y = self.states(mode.pol, mid)[mode.n - 1, col]
            amplitudes[k] = np.linalg.solve(Phi, y)
        amplitudes[0, 1] = 0.0
        return ModeCoefficients(mode=mode, radii=np.asarray(radii), amplitudes=amplitudes, labels=labels)

    def _segment_radii(self) -> Tuple[List[float], Tuple[str, ...]]:
        cuts = sorted(set(self.breakpoints()) | set(self.source_radii()))
        radii = [0.0] + cuts + [math.inf]
        labels = tuple(
            self.medium.layers[self.medium.layer_index(_midpoint(lo, hi))].name
            for lo, hi in zip(radii[:-1], radii[1:])
        )
        return radii, labels


def _midpoint(lo: float, hi: float) -> float:
    if math.isinf(hi):
        return 2.0 * lo if lo > 0 else 1.0
    return 0.5 * (lo + hi)


def _segments(a: float, b: float, breaks: Sequence[float], bands: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Split (a, b) at breakpoints and remove excluded bands."""
    points = [a] + [x for x in breaks if a < x < b] + [b]
    pieces = [(lo, hi) for lo, hi in zip(points[:-1], points[1:]) if hi > lo]
    for band_lo, band_hi in bands:
        trimmed = []
        for lo, hi in pieces:
            if band_hi <= lo or band_lo >= hi:
                trimmed.append((lo, hi))
                continue
            if lo < band_lo:
                trimmed.append((lo, band_lo))
            if band_hi < hi:
                trimmed.append((band_hi, hi))
        pieces = trimmed
    return pieces


class SpectralFieldSolution(FieldSolutionBase):
    """Solver output: superposition of the fields of one or more source spheres."""

    def __init__(
        self,
        medium: LayeredMedium,
        delta: float,
        orders: np.ndarray,
        responses: Dict[Polarization, ModeResponse],
        couplings: Dict[Polarization, List[SourceCoupling]],
        sources: Tuple[SphericalSource, ...],
        options: SolverOptions,
    ):
        self.medium = medium
        self.delta = delta
        self.orders = orders
        self.responses = responses
        self.couplings = couplings
        self.sources = sources
        self.options = options
        self.tail_estimate: Optional[float] = None
        self._azimuths = {
            pol: np.unique(np.concatenate([c.azimuths for c in couplings.get(pol, [])] or [np.zeros(0, int)]))
            for pol in POLARIZATIONS
        }

    def azimuths(self, pol: Polarization) -> np.ndarray:
        return self._azimuths[pol]

    def source_radii(self) -> Tuple[float, ...]:
        return tuple(sorted({s.radius for s in self.sources}))

    def excluded_bands(self) -> List[Tuple[float, float]]:
        eta = self.options.source_exclusion
        return [
            (s.radius * (1 - eta), s.radius * (1 + eta))
            for s in self.sources if s.kind == SourceKind.POINT_DIPOLE
        ]

    def layer_bases(self, pol: Polarization) -> Tuple[ILayerBasis, ...]:
        return self.responses[pol].bases

    def states(self, pol: Polarization, r: float, side: Optional[str] = None) -> np.ndarray:
        ms = self._azimuths[pol]
        N = self.orders.size
        total = np.zeros((N, ms.size, 2), dtype=complex)
        couplings = self.couplings.get(pol, [])
        if not couplings:
            return total
        response = self.responses[pol]
        layer = self.medium.layer_index(r, side, self.options.interface_tolerance)
        Phi = response.bases[layer].columns(r)
        inner = outer = None
        for coupling in couplings:
            r_s = coupling.source.radius
            below = r < r_s or (r == r_s and side == "inner")
            if below:
                if inner is None:
                    inner = combine(Phi, response.inner[layer])
                state = inner
                log_scale = response.inner_log[layer] - response.inner_log[coupling.layer]
                amplitude = coupling.inner_amplitude
            else:
                if outer is None:
                    outer = combine(Phi, response.outer[layer])
                state = outer
                log_scale = response.outer_log[layer] - response.outer_log[coupling.layer]
                amplitude = coupling.outer_amplitude
            cols = np.searchsorted(ms, coupling.azimuths)
            weights = _scaled(amplitude, log_scale[:, None])
            total[:, cols, :] += weights[:, :, None] * state[:, None, :]
        return total

    def mode_coefficients(self, mode: ModeIndex) -> ModeCoefficients:
        radii, labels = self._segment_radii()
        amplitudes = np.zeros((len(radii) - 1, 2), dtype=complex)
        ms = self._azimuths[mode.pol]
        if mode.n > self.n_max or mode.m not in ms:
            return ModeCoefficients(mode=mode, radii=np.asarray(radii), amplitudes=amplitudes, labels=labels)
        response = self.responses[mode.pol]
        i = mode.n - 1
        for k, (lo, hi) in enumerate(zip(radii[:-1], radii[1:])):
            mid = _midpoint(lo, hi)
            layer = self.medium.layer_index(mid)
            for coupling in self.couplings.get(mode.pol, []):
                if mode.m not in coupling.azimuths:
                    continue
                col = int(np.searchsorted(coupling.azimuths, mode.m))
                if mid < coupling.source.radius:
                    log_scale = response.inner_log[layer, i] - response.inner_log[coupling.layer, i]
                    weight = _scaled(coupling.inner_amplitude[i, col], log_scale)
                    amplitudes[k] += weight * response.inner[layer, i]
                else:
                    log_scale = response.outer_log[layer, i] - response.outer_log[coupling.layer, i]
                    weight = _scaled(coupling.outer_amplitude[i, col], log_scale)
                    amplitudes[k] += weight * response.outer[layer, i]
        return ModeCoefficients(mode=mode, radii=np.asarray(radii), amplitudes=amplitudes, labels=labels)


class PulledBackFieldSolution(FieldSolutionBase):
    """δ = 0 limit fields of the doubly complementary medium rebuilt from the effective solution.

    Equal to the effective field outside the shell, its Kelvin(r₂) reflection in
    the shell and its dilation pull-back in the core.
    """

    def __init__(self, effective_solution: FieldSolutionBase, construction, sources, solver: "SpectralSolver"):
        self.tilde = effective_solution
        self.construction = construction
        self.sources = tuple(sources)
        self.medium = construction.medium
        self.delta = 0.0
        self.orders = effective_solution.orders
        self.options = effective_solution.options
        self._solver = solver

    def azimuths(self, pol: Polarization) -> np.ndarray:
        return self.tilde.azimuths(pol)

    def source_radii(self) -> Tuple[float, ...]:
        return tuple(sorted({s.radius for s in self.sources}))

    def excluded_bands(self) -> List[Tuple[float, float]]:
        eta = self.options.source_exclusion
        return [
            (s.radius * (1 - eta), s.radius * (1 + eta))
            for s in self.sources if s.kind == SourceKind.POINT_DIPOLE
        ]

    def layer_bases(self, pol: Polarization) -> Tuple[ILayerBasis, ...]:
        return self._solver.layer_bases(self.medium, 0.0, pol, self.n_max)

    def states(self, pol: Polarization, r: float, side: Optional[str] = None) -> np.ndarray:
        c = self.construction
        if r > c.r2 or (r == c.r2 and side == "outer"):
            return self.tilde.states(pol, r, side)
        if r > c.r1 or (r == c.r1 and side == "outer"):
            flipped = {"inner": "outer", "outer": "inner"}.get(side)
            return self.tilde.states(pol, c.r2**2 / r, flipped)
        return self.tilde.states(pol, c.rho * r, side)


class SpectralSolver:
    """Per-mode transmission solves, truncation and limit-field reconstruction."""

    def __init__(self, settings: Settings, options: Optional[SolverOptions] = None):
        self.settings = settings
        self.options = options or SolverOptions.from_settings(settings)
        self._response_cache = lru_cache(maxsize=256)(self._build_response)
        logger.debug(f"Spectral solver configured with {self.options}")

    # -- bases and responses ---------------------------------------------------

    def layer_bases(
        self,
        medium: LayeredMedium,
        delta: float,
        pol: Polarization,
        n_max: int,
        force_ode: bool = False,
    ) -> Tuple[ILayerBasis, ...]:
        if delta < 0:
            raise DomainError(f"Loss parameter must be non-negative, got {delta}", error_code="negative_delta")
        orders = np.arange(1, n_max + 1)
        return tuple(
            build_layer_basis(
                layer, pol, delta, orders, medium.omega,
                miller=self.options.miller, integrator=self.options.integrator, force_ode=force_ode,
            )
            for layer in medium.layers
        )

    def fundamental_pair(
        self,
        layer: RadialLayer,
        n: int,
        pol: Polarization,
        delta: float,
        omega: float = 1.0,
        force_ode: bool = False,
    ) -> ILayerBasis:
        """Basis of one layer restricted to order n; ``columns(r)[0]`` is the 2×2 pair."""
        if n < 1:
            raise DomainError(f"Mode order must be >= 1, got {n}", error_code="mode_order")
        if delta < 0:
            raise DomainError(f"Loss parameter must be non-negative, got {delta}", error_code="negative_delta")
        return build_layer_basis(
            layer, Polarization(pol), delta, np.array([n]), omega,
            miller=self.options.miller, integrator=self.options.integrator, force_ode=force_ode,
        )

    def mode_response(
        self,
        medium: LayeredMedium,
        delta: float,
        pol: Polarization,
        n_max: int,
        force_ode: bool = False,
    ) -> ModeResponse:
        return self._response_cache(medium, float(delta), Polarization(pol), int(n_max), bool(force_ode))

    def _build_response(
        self,
        medium: LayeredMedium,
        delta: float,
        pol: Polarization,
        n_max: int,
        force_ode: bool,
    ) -> ModeResponse:
        bases = self.layer_bases(medium, delta, pol, n_max, force_ode)
        K = len(bases)
        N = n_max
        inner = np.zeros((K, N, 2), dtype=complex)
        inner_log = np.zeros((K, N))
        outer = np.zeros((K, N, 2), dtype=complex)
        outer_log = np.zeros((K, N))
        inner[0, :, 0] = 1.0
        outer[K - 1, :, 1] = 1.0

        for layer in range(K - 1):
            r_b = medium.layers[layer].r_out
            state = combine(bases[layer].columns(r_b), inner[layer])
            coeffs = _solve2(bases[layer + 1].columns(r_b), state)
            scale = np.max(np.abs(coeffs), axis=1)
            scale = np.where(scale > 0, scale, 1.0)
            inner[layer + 1] = coeffs / scale[:, None]
            inner_log[layer + 1] = inner_log[layer] + np.log(scale)

        for layer in range(K - 1, 0, -1):
            r_b = medium.layers[layer].r_in
            state = combine(bases[layer].columns(r_b), outer[layer])
            coeffs = _solve2(bases[layer - 1].columns(r_b), state)
            scale = np.max(np.abs(coeffs), axis=1)
            scale = np.where(scale > 0, scale, 1.0)
            outer[layer - 1] = coeffs / scale[:, None]
            outer_log[layer - 1] = outer_log[layer] + np.log(scale)

        if not (np.all(np.isfinite(inner)) and np.all(np.isfinite(outer))):
            raise ResonanceError(
                f"Non-finite transmission coefficients for {pol.value} at delta={delta}",
                error_code="transfer_singular",
                details={"pol": pol.value, "delta": delta},
            )
        logger.debug(
            f"Built {pol.value} response for '{medium.label}' delta={delta:g}, N={N}, "
            f"paths {[b.kind for b in bases]}"
        )
        return ModeResponse(
            medium=medium, delta=delta, pol=pol, orders=np.arange(1, N + 1), bases=bases,
            inner=inner, inner_log=inner_log, outer=outer, outer_log=outer_log,
        )

    # -- sources -----------------------------------------------------------------

    def _couple(self, response: ModeResponse, source: SphericalSource) -> SourceCoupling:
        medium = response.medium
        r_s = source.radius
        if medium.on_interface(r_s, self.options.interface_tolerance):
            raise DomainError(
                f"Source sphere r={r_s} lies on an interface",
                error_code="source_on_interface",
                details={"interfaces": list(medium.interfaces)},
            )
        layer = medium.layer_index(r_s)
        azimuths, jumps = source_jumps(source, response.pol, response.orders, medium, response.delta)

        y_in = response.inner_state(layer, r_s)
        y_out = response.outer_state(layer, r_s)
        det = y_in[:, 0] * y_out[:, 1] - y_in[:, 1] * y_out[:, 0]
        scale = np.linalg.norm(y_in, axis=1) * np.linalg.norm(y_out, axis=1)
        active = np.any(jumps != 0, axis=(1, 2))
        singular = active & ~(np.abs(det) > self.options.singular_tolerance * scale)
        if np.any(singular):
            n = int(response.orders[np.argmax(singular)])
            raise ResonanceError(
                f"Singular transmission problem for {response.pol.value} mode n={n} at delta={response.delta}",
                error_code="singular_mode",
                details={"n": n, "pol": response.pol.value, "delta": response.delta},
            )

        det = np.where(active, det, 1.0)[:, None]
        j_u, j_w = jumps[..., 0], jumps[..., 1]
        x0 = (j_u * y_out[:, None, 1] - j_w * y_out[:, None, 0]) / det
        x1 = (y_in[:, None, 0] * j_w - y_in[:, None, 1] * j_u) / det
        return SourceCoupling(
            source=source, pol=response.pol, layer=layer, azimuths=azimuths,
            inner_amplitude=-x0, outer_amplitude=x1,
        )

    def solve_sources(
        self,
        medium: LayeredMedium,
        sources: SourcesLike,
        delta: float,
        n_max: int,
        force_ode: bool = False,
    ) -> SpectralFieldSolution:
        """Field of the given sources with a fixed truncation."""
        sources = _as_sources(sources)
        if delta < 0:
            raise DomainError(f"Loss parameter must be non-negative, got {delta}", error_code="negative_delta")
        responses: Dict[Polarization, ModeResponse] = {}
        couplings: Dict[Polarization, List[SourceCoupling]] = {}
        for pol in POLARIZATIONS:
            active = [s for s in sources if pol in s.polarizations() and not s.is_zero()]
            if not active:
                continue
            responses[pol] = self.mode_response(medium, delta, pol, n_max, force_ode)
            couplings[pol] = [self._couple(responses[pol], s) for s in active]
        return SpectralFieldSolution(
            medium, delta, np.arange(1, n_max + 1), responses, couplings, sources, self.options,
        )

    def solve_mode(
        self,
        medium: LayeredMedium,
        mode: ModeIndex,
        source: SphericalSource,
        delta: float,
        force_ode: bool = False,
    ) -> ModeCoefficients:
        """Per-segment amplitudes of a single mode."""
        solution = self.solve_sources(medium, source, delta, mode.n, force_ode)
        return solution.mode_coefficients(mode)

    # -- truncation --------------------------------------------------------------

    def truncation_order(self, medium: LayeredMedium, delta: float, sources: SourcesLike) -> int:
        sources = _as_sources(sources)
        policy = self.options.truncation
        finite = [s.max_order for s in sources if s.is_finite]
        if finite and len(finite) == len(sources):
            return max(1, max(finite))
        n = policy.n_floor
        if delta > 0 and medium.has_lossy_layer and medium.r2 and medium.r3:
            n = max(n, math.ceil(policy.safety_factor * math.log(1.0 / delta) / math.log(medium.r3 / medium.r2)))
        return min(max(n, max(finite, default=0)), policy.n_cap)

    def default_tail_regions(self, medium: LayeredMedium, sources: Sequence[SphericalSource]) -> List[Tuple[float, float]]:
        """Lossy layers, then (r₃, 2r₃) clear of a neighbourhood of every source sphere.

        Lossy layers stay whole since the power integrates over all of them.
        """
        regions = [(medium.layers[i].r_in, medium.layers[i].r_out) for i in medium.lossy_layers]
        margin = 1.0 + self.options.truncation.source_margin
        near = [(s.radius / margin, s.radius * margin) for s in sources]
        if medium.r3:
            regions.extend(_segments(medium.r3, 2.0 * medium.r3, (), near))
        if not regions:
            r_max = max(s.radius for s in sources)
            regions.append((margin * r_max, 2.0 * margin * r_max))
        return regions

    def tail_estimate(self, solution: FieldSolutionBase, regions: Sequence[Region]) -> float:
        """Largest relative weight of the last ``tail_window`` orders over the regions.

        Pieces inside lossy layers are pooled, so their tail is measured against
        the dissipated power as a whole; any other region against its own norm.
        """
        window = self.options.truncation.tail_window
        medium = solution.medium
        lossy = [(medium.layers[i].r_in, medium.layers[i].r_out) for i in medium.lossy_layers]
        pooled = np.zeros(solution.n_max)
        worst = 0.0
        for region in regions:
            per_mode = solution.norm_squared(region, by_mode=True)
            weights = sum(per_mode.values())
            lo, hi = solution._resolve_region(region)
            if any(a <= lo and hi <= b for a, b in lossy):
                pooled[:weights.size] += weights
                continue
            total = float(np.sum(weights))
            if total > 0:
                worst = max(worst, float(np.sum(weights[-window:])) / total)
        total = float(np.sum(pooled))
        if total > 0:
            worst = max(worst, float(np.sum(pooled[-window:])) / total)
        return worst

    def solve_full(
        self,
        medium: LayeredMedium,
        sources: SourcesLike,
        delta: float,
        n_max: Optional[int] = None,
        tail_regions: Optional[Sequence[Region]] = None,
        force_ode: bool = False,
        n_min: Optional[int] = None,
    ) -> SpectralFieldSolution:
        """Truncated solve with the adaptive tail check for infinite mode sets.

        ``n_min`` raises the starting order of the adaptive path; sweeps use it to
        keep the truncation nondecreasing as δ shrinks.
        """
        sources = _as_sources(sources)
        policy = self.options.truncation
        if delta == 0 and medium.has_lossy_layer and n_max is None and not all(s.is_finite for s in sources):
            raise RefusalError(
                "The full series at delta = 0 is not assembled for a medium with a negative layer",
                error_code="lossless_series",
                details={"medium": medium.label},
            )
        n = n_max or self.truncation_order(medium, delta, sources)
        if n_max is None and n_min and not all(s.is_finite for s in sources):
            n = min(max(n, int(n_min)), policy.n_cap)
        solution = self.solve_sources(medium, sources, delta, n, force_ode)
        if n_max is not None or all(s.is_finite for s in sources):
            solution.tail_estimate = 0.0
            return solution

        regions = list(tail_regions) if tail_regions else self.default_tail_regions(medium, sources)
        tail = self.tail_estimate(solution, regions)
        while tail > policy.tail_tolerance and n < policy.n_cap:
            n = min(policy.n_cap, math.ceil(n * policy.growth_factor))
            logger.debug(f"Tail {tail:.2e} above tolerance at delta={delta:g}, growing truncation to {n}")
            solution = self.solve_sources(medium, sources, delta, n, force_ode)
            tail = self.tail_estimate(solution, regions)
        if tail > policy.tail_tolerance:
            logger.warning(f"Truncation tail {tail:.2e} still above tolerance at n_cap={policy.n_cap}, delta={delta:g}")
        solution.tail_estimate = tail
        logger.info(f"Solved '{medium.label}' at delta={delta:g} with N={n}, tail {tail:.2e}")
        return solution

    async def solve_full_async(
        self,
        medium: LayeredMedium,
        sources: SourcesLike,
        delta: float,
        executor: Optional[Executor] = None,
        **kwargs,
    ) -> SpectralFieldSolution:
        """solve_full with both polarization responses prepared concurrently."""
        sources = _as_sources(sources)
        n = kwargs.get("n_max") or self.truncation_order(medium, delta, sources)
        loop = asyncio.get_running_loop()
        await asyncio.gather(*[
            loop.run_in_executor(executor, self.mode_response, medium, delta, pol, n, kwargs.get("force_ode", False))
            for pol in POLARIZATIONS
        ])
        return await loop.run_in_executor(executor, lambda: self.solve_full(medium, sources, delta, **kwargs))

    # -- effective problem and limits -----------------------------------------------

    def solve_effective(self, construction, tilde_sources: SourcesLike, n_max: Optional[int] = None) -> SpectralFieldSolution:
        """Solve on the effective (uniformly positive) medium; δ plays no role."""
        tilde_sources = _as_sources(tilde_sources)
        if not tilde_sources:
            raise DomainError("The renormalized source is empty", error_code="empty_source")
        return self.solve_full(construction.effective, tilde_sources, 0.0, n_max=n_max)

    def extend_limit_fields(self, construction, tilde_solution: FieldSolutionBase,
                            sources: SourcesLike) -> PulledBackFieldSolution:
        """δ = 0 limit fields for sources outside the annulus r_core < |x| < r₃."""
        sources = _as_sources(sources)
        for source in sources:
            if construction.r_core < source.radius < construction.r3:
                raise RefusalError(
                    f"Limit fields are only available for sources outside ({construction.r_core:g}, {construction.r3:g})",
                    error_code="source_in_resonant_region",
                    details={"radius": source.radius},
                )
        return PulledBackFieldSolution(tilde_solution, construction, sources, self)

    # -- evaluation ----------------------------------------------------------------

    def field_eval(self, solution: FieldSolutionBase, points, side: Optional[str] = None) -> Dict[str, np.ndarray]:
        return solution.field_at(points, side)

    def norm_L2(self, solution: FieldSolutionBase, region: Region,
                minus: Optional[FieldSolutionBase] = None) -> float:
        return solution.norm(region, minus)


def _as_sources(sources: SourcesLike) -> Tuple[SphericalSource, ...]:
    if isinstance(sources, SphericalSource):
        return (sources,)
    return tuple(sources)


def regular_coefficient_logs(
    source: SphericalSource,
    pol: Polarization,
    n_max: int,
    a1: complex = 1.0,
    a2: complex = 1.0,
    omega: float = 1.0,
) -> np.ndarray:
    """ln|c_n| of a source's regular part in a homogeneous background, n = 1..n_max.

    c_n is the amplitude of the regular field below the source relative to
    r ↦ ĵ_n(kr)/kⁿ, summed over m in the ℓ² sense.
    """
    k = wavenumber(omega, a1, a2)
    orders = np.arange(1, n_max + 1)
    z = k * source.radius
    table = scaled_radial_table(n_max, z)
    hbar = table.hbar[1:, 0]
    hric = table.hbar_ric[1:, 0]

    te = pol == Polarization.TE
    background = RadialLayer(
        0.0, math.inf,
        ConformalRadialTensor.constant(a2 if te else a1),
        ConformalRadialTensor.constant(a1 if te else a2),
        name="background",
    )
    medium = LayeredMedium(layers=(background,), omega=omega)
    _, jumps = source_jumps(source, pol, orders, medium, 0.0)
    # A = det[y_out, j]/W, y_out = (r ĥ, i(rĥ)'/(ω a₁)), W = -i(2n+1)/(ω a₁ k); ĥ's z^{-n-1} kept in log form
    u_out = source.radius * hbar
    w_out = 1j * hric / (omega * a1)
    W = -1j * (2 * orders + 1) / (omega * a1 * k)
    amplitude = (u_out[:, None] * jumps[..., 1] - w_out[:, None] * jumps[..., 0]) / W[:, None]
    magnitude = np.sqrt(np.sum(np.abs(amplitude) ** 2, axis=1))
    with np.errstate(divide="ignore"):
        return np.log(magnitude) - (orders + 1.0) * np.log(abs(z)) + orders * np.log(abs(k))


def free_dipole_field(points, position, moment, omega: float = 1.0, eps: complex = 1.0, mu: complex = 1.0):
    """E and H of a point dipole in a homogeneous medium (time factor e^{-iωt})."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.asarray(moment, dtype=complex)
    k = omega * np.sqrt(complex(eps) * complex(mu))
    R_vec = pts - np.asarray(position, dtype=float)[None, :]
    R = np.linalg.norm(R_vec, axis=-1)
    if np.any(R == 0):
        raise DomainError("Dipole field is singular at the dipole position", error_code="dipole_position")
    Rhat = R_vec / R[:, None]
    g = np.exp(1j * k * R) / (4.0 * np.pi * R)
    kR = k * R
    a = 1.0 + 1j / kR - 1.0 / kR**2
    b = -1.0 - 3j / kR + 3.0 / kR**2
    Rp = Rhat @ p
    E = 1j * omega * mu * g[:, None] * (a[:, None] * p[None, :] + (b * Rp)[:, None] * Rhat)
    grad = (g * (1j * k - 1.0 / R))[:, None] * Rhat
    H = np.cross(grad, p[None, :])
    return {"E": E, "H": H}


def tangential_null_ratio(n: int, r2: float, omega: float = 1.0, pol: Polarization = Polarization.TE) -> complex:
    """a_sing/a_reg of a vacuum field α ĵ_n + β ŷ_n whose tangential E vanishes on |x| = r₂."""
    z = omega * r2
    table = scaled_radial_table(n, z)
    if Polarization(pol) == Polarization.TE:
        num, den = table.jbar[n, 0], table.ybar[n, 0]
    else:
        num, den = table.jbar_ric[n, 0], table.ybar_ric[n, 0]
    return complex(-np.exp((2 * n + 1) * np.log(complex(z))) * num / den)
