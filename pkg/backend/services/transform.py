"""
Reflection maps and the doubly complementary construction.

Maps push material tensors, fields, currents and traces forward with the usual
change-of-variables rules:

    T_*A(y) = ∇T A ∇Tᵀ / det ∇T       (material tensors)
    E'(y)   = ∇T^{-T} E               (fields)
    j'(y)   = j / det ∇T              (current densities)
    g'(y)   = sign · ∇_∂T g / |det ∇_∂T|   (tangential traces)

all evaluated at x = T^{-1}(y). For radial maps the mode-data of a surface
current moves to the image sphere with factor sign·r_s/|T|(r_s), which is the
trace rule restricted to one sphere.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import DomainError, NumericalError
from core.interfaces import IRadialMap
from models.medium import ConformalRadialTensor, LayeredMedium, RadialLayer
from models.results import ComplementarityReport
from models.source import SourceKind, SphericalSource

logger = logging.getLogger(__name__)

TensorLike = Union[ConformalRadialTensor, Callable[[np.ndarray], np.ndarray]]


def _points(x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    return np.atleast_2d(arr), single


def _unwrap(values: np.ndarray, single: bool) -> np.ndarray:
    return values[0] if single else values


class IdentityMap(IRadialMap):
    """x ↦ x."""

    def apply(self, x):
        return np.array(x, dtype=float)

    def inverse(self, y):
        return np.array(y, dtype=float)

    def jacobian(self, x):
        pts, single = _points(x)
        return _unwrap(np.broadcast_to(np.eye(3), (len(pts), 3, 3)).copy(), single)

    @property
    def orientation(self) -> int:
        return 1

    @property
    def is_radial(self) -> bool:
        return True

    def radial(self, r: float) -> float:
        return float(r)

    def __repr__(self):
        return "IdentityMap()"


class KelvinMap(IRadialMap):
    """Inversion in the sphere of radius s: x ↦ s² x / |x|²."""

    def __init__(self, radius: float):
        if not radius > 0:
            raise DomainError("Kelvin radius must be positive", error_code="kelvin_radius")
        self.radius = float(radius)

    def _check(self, pts: np.ndarray) -> np.ndarray:
        r2 = np.einsum("pi,pi->p", pts, pts)
        if np.any(r2 == 0):
            raise DomainError("Kelvin inversion is undefined at the origin", error_code="kelvin_origin")
        return r2

    def apply(self, x):
        pts, single = _points(x)
        r2 = self._check(pts)
        return _unwrap(self.radius**2 * pts / r2[:, None], single)

    def inverse(self, y):
        return self.apply(y)

    def jacobian(self, x):
        pts, single = _points(x)
        r2 = self._check(pts)
        xhat = pts / np.sqrt(r2)[:, None]
        reflection = np.eye(3)[None] - 2.0 * np.einsum("pi,pj->pij", xhat, xhat)
        return _unwrap((self.radius**2 / r2)[:, None, None] * reflection, single)

    @property
    def orientation(self) -> int:
        return -1

    @property
    def is_radial(self) -> bool:
        return True

    def radial(self, r: float) -> float:
        if r == 0:
            raise DomainError("Kelvin inversion is undefined at the origin", error_code="kelvin_origin")
        return self.radius**2 / r

    def __repr__(self):
        return f"KelvinMap({self.radius!r})"


class DilationMap(IRadialMap):
    """x ↦ ρ x."""

    def __init__(self, factor: float):
        if not factor > 0:
            raise DomainError("Dilation factor must be positive", error_code="dilation_factor")
        self.factor = float(factor)

    def apply(self, x):
        return self.factor * np.asarray(x, dtype=float)

    def inverse(self, y):
        return np.asarray(y, dtype=float) / self.factor

    def jacobian(self, x):
        pts, single = _points(x)
        return _unwrap(self.factor * np.broadcast_to(np.eye(3), (len(pts), 3, 3)).copy(), single)

    @property
    def orientation(self) -> int:
        return 1

    @property
    def is_radial(self) -> bool:
        return True

    def radial(self, r: float) -> float:
        return self.factor * r

    def __repr__(self):
        return f"DilationMap({self.factor!r})"


class CompositeMap(IRadialMap):
    """Maps applied left to right: CompositeMap([F, G]) is G∘F."""

    def __init__(self, maps: Sequence[IRadialMap]):
        if not maps:
            raise DomainError("Composite map needs at least one map", error_code="empty_composite")
        self.maps = tuple(maps)

    def apply(self, x):
        y = np.asarray(x, dtype=float)
        for m in self.maps:
            y = m.apply(y)
        return y

    def inverse(self, y):
        x = np.asarray(y, dtype=float)
        for m in reversed(self.maps):
            x = m.inverse(x)
        return x

    def jacobian(self, x):
        pts, single = _points(x)
        total = np.broadcast_to(np.eye(3), (len(pts), 3, 3)).copy()
        current = pts
        for m in self.maps:
            total = np.einsum("pij,pjk->pik", np.atleast_3d(m.jacobian(current)).reshape(len(pts), 3, 3), total)
            current = np.atleast_2d(m.apply(current))
        return _unwrap(total, single)

    @property
    def orientation(self) -> int:
        sign = 1
        for m in self.maps:
            sign *= m.orientation
        return sign

    @property
    def is_radial(self) -> bool:
        return all(m.is_radial for m in self.maps)

    def radial(self, r: float) -> float:
        for m in self.maps:
            r = m.radial(r)
        return r

    def __repr__(self):
        return f"CompositeMap({list(self.maps)!r})"


class SampledMap(IRadialMap):
    """Black-box map with central-difference Jacobians, for verification only."""

    def __init__(
        self,
        forward: Callable[[np.ndarray], np.ndarray],
        inverse: Callable[[np.ndarray], np.ndarray],
        orientation: int,
        step: float = 1e-6,
    ):
        self._forward = forward
        self._inverse = inverse
        self._orientation = 1 if orientation >= 0 else -1
        self.step = step

    def apply(self, x):
        pts, single = _points(x)
        return _unwrap(np.asarray([self._forward(p) for p in pts]), single)

    def inverse(self, y):
        pts, single = _points(y)
        return _unwrap(np.asarray([self._inverse(p) for p in pts]), single)

    def jacobian(self, x):
        pts, single = _points(x)
        out = np.empty((len(pts), 3, 3))
        for i, p in enumerate(pts):
            h = self.step * max(1.0, float(np.linalg.norm(p)))
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                out[i, :, k] = (np.asarray(self._forward(p + e)) - np.asarray(self._forward(p - e))) / (2 * h)
        return _unwrap(out, single)

    @property
    def orientation(self) -> int:
        return self._orientation


def compose(*maps: IRadialMap) -> CompositeMap:
    """compose(F, G) is G∘F."""
    return CompositeMap(maps)


def _tensor_values(A: TensorLike, x: np.ndarray) -> np.ndarray:
    if isinstance(A, ConformalRadialTensor):
        return A.tensor(x)
    values = np.asarray(A(x), dtype=complex)
    return values.reshape(len(x), 3, 3)


def push_forward_tensor(T: IRadialMap, A: TensorLike, y) -> np.ndarray:
    """T_*A(y) = ∇T A ∇Tᵀ / det ∇T at x = T^{-1}(y)."""
    pts, single = _points(y)
    x = np.atleast_2d(T.inverse(pts))
    J = np.atleast_3d(T.jacobian(x)).reshape(len(pts), 3, 3)
    det = np.linalg.det(J)
    values = _tensor_values(A, x)
    pushed = np.einsum("pij,pjk,plk->pil", J, values, J) / det[:, None, None]
    return _unwrap(pushed, single)


def push_forward_conformal(T: IRadialMap, tensor: ConformalRadialTensor) -> ConformalRadialTensor:
    """Closed-form image of a conformally radial tensor under a radial map."""
    if isinstance(T, IdentityMap):
        return tensor
    if isinstance(T, KelvinMap):
        s = T.radius
        if tensor.power == 0:
            return ConformalRadialTensor(-tensor.coefficient, power=2, pivot=s)
        return ConformalRadialTensor.constant(-tensor.coefficient * (tensor.pivot / s) ** 2)
    if isinstance(T, DilationMap):
        rho = T.factor
        if tensor.power == 0:
            return ConformalRadialTensor.constant(tensor.coefficient / rho)
        return ConformalRadialTensor(tensor.coefficient / rho, power=2, pivot=tensor.pivot * rho)
    if isinstance(T, CompositeMap):
        for m in T.maps:
            tensor = push_forward_conformal(m, tensor)
        return tensor
    raise DomainError(f"No closed form for {type(T).__name__}", error_code="no_closed_form")


def push_forward_field(T: IRadialMap, E, x) -> Tuple[np.ndarray, np.ndarray]:
    """(T(x), ∇T^{-T} E(x))."""
    pts, single = _points(x)
    vectors = np.atleast_2d(np.asarray(E, dtype=complex))
    J = np.atleast_3d(T.jacobian(pts)).reshape(len(pts), 3, 3)
    image = np.linalg.solve(np.transpose(J, (0, 2, 1)), vectors[..., None])[..., 0]
    return _unwrap(np.atleast_2d(T.apply(pts)), single), _unwrap(image, single)


def push_forward_current(T: IRadialMap, j, x, contravariant: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(T(x), j(x)/det ∇T(x)); with ``contravariant`` the density is also mapped by ∇T."""
    pts, single = _points(x)
    vectors = np.atleast_2d(np.asarray(j, dtype=complex))
    J = np.atleast_3d(T.jacobian(pts)).reshape(len(pts), 3, 3)
    det = np.linalg.det(J)
    if contravariant:
        vectors = np.einsum("pij,pj->pi", J, vectors)
    return _unwrap(np.atleast_2d(T.apply(pts)), single), _unwrap(vectors / det[:, None], single)


def _tangent_frame(xhat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.where(np.abs(xhat[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    t1 = np.cross(helper, xhat)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(xhat, t1)
    return t1, t2


def push_forward_trace(T: IRadialMap, g, x) -> Tuple[np.ndarray, np.ndarray]:
    """Tangential trace on the sphere through x: sign·∇_∂T g / |det ∇_∂T|."""
    pts, single = _points(x)
    vectors = np.atleast_2d(np.asarray(g, dtype=complex))
    J = np.atleast_3d(T.jacobian(pts)).reshape(len(pts), 3, 3)
    xhat = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    t1, t2 = _tangent_frame(xhat)
    area = np.linalg.norm(np.cross(np.einsum("pij,pj->pi", J, t1), np.einsum("pij,pj->pi", J, t2)), axis=-1)
    image = T.orientation * np.einsum("pij,pj->pi", J, vectors) / area[:, None]
    return _unwrap(np.atleast_2d(T.apply(pts)), single), _unwrap(image, single)


def push_forward_source(T: IRadialMap, source: SphericalSource) -> SphericalSource:
    """Image of a sphere-supported source under a radial map."""
    if not T.is_radial:
        raise DomainError("Source push-forward needs a radial map", error_code="non_radial_map")
    image_radius = T.radial(source.radius)
    if source.kind == SourceKind.SURFACE_CURRENT:
        return source.relocated(image_radius, T.orientation * source.radius / image_radius)

    x0 = source.position
    J = T.jacobian(x0)
    moment = T.orientation * (J @ np.asarray(source.moment, dtype=complex))
    image = T.apply(x0)
    return replace(
        source,
        radius=image_radius,
        moment=tuple(complex(c) for c in moment),
        direction=tuple(float(c) for c in image / np.linalg.norm(image)),
    )


def layer_tensor(layer: RadialLayer, which: str) -> ConformalRadialTensor:
    return layer.eps if which == "eps" else layer.mu


def medium_tensor(medium: LayeredMedium, x, which: str = "eps", side: Optional[str] = None) -> np.ndarray:
    """Piecewise tensor of a layered medium at points (loss not included)."""
    pts, single = _points(x)
    out = np.empty((len(pts), 3, 3), dtype=complex)
    for i, p in enumerate(pts):
        layer = medium.layers[medium.layer_index(float(np.linalg.norm(p)), side)]
        out[i] = layer_tensor(layer, which).tensor(p)
    return _unwrap(out, single)


def _max_entry(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def verify_complementary(
    shell: RadialLayer,
    outer: RadialLayer,
    F: IRadialMap,
    samples: np.ndarray,
    boundary_directions: Optional[np.ndarray] = None,
) -> ComplementarityReport:
    """Residuals of F_*ε_shell = ε_outer, F_*μ_shell = μ_outer and F = id on ∂(shell)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float)) if len(samples) else np.zeros((0, 3))
    if len(samples) == 0:
        logger.warning("Complementarity check called with an empty sample set")
        return ComplementarityReport()

    radii = np.linalg.norm(samples, axis=-1)
    in_outer = (radii > outer.r_in) & (radii < outer.r_out)
    used = samples[in_outer]
    if len(used):
        pre_radii = np.linalg.norm(np.atleast_2d(F.inverse(used)), axis=-1)
        in_shell = (pre_radii > shell.r_in) & (pre_radii < shell.r_out)
        used = used[in_shell]
    n_skipped = len(samples) - len(used)
    if n_skipped:
        logger.debug(f"Skipped {n_skipped} samples outside the complementary pair")

    eps_res = mu_res = 0.0
    if len(used):
        eps_res = _max_entry(push_forward_tensor(F, shell.eps, used) - outer.eps.tensor(used))
        mu_res = _max_entry(push_forward_tensor(F, shell.mu, used) - outer.mu.tensor(used))

    directions = boundary_directions if boundary_directions is not None else samples
    unit = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    boundary = shell.r_out * unit
    boundary_res = _max_entry(np.atleast_2d(F.apply(boundary)) - boundary)

    return ComplementarityReport(
        eps_residual=eps_res,
        mu_residual=mu_res,
        boundary_residual=boundary_res,
        n_used=len(used),
        n_skipped=n_skipped,
    )


def verify_dcm(
    F: IRadialMap,
    G: IRadialMap,
    medium: LayeredMedium,
    samples: np.ndarray,
    band: Tuple[float, float],
) -> ComplementarityReport:
    """Residuals of (G∘F)_*ε⁺ = ε⁺ on the band r₂ < |y| < r₃ and G = id on |x| = r₃."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float)) if len(samples) else np.zeros((0, 3))
    if len(samples) == 0:
        logger.warning("Doubly complementary check called with an empty sample set")
        return ComplementarityReport()

    r_lo, r_hi = band
    radii = np.linalg.norm(samples, axis=-1)
    used = samples[(radii > r_lo) & (radii < r_hi)]
    GF = compose(F, G)

    eps_res = mu_res = 0.0
    if len(used):
        x = np.atleast_2d(GF.inverse(used))
        eps_res = _max_entry(
            push_forward_tensor(GF, lambda p: medium_tensor(medium, p, "eps"), used)
            - medium_tensor(medium, used, "eps")
        )
        mu_res = _max_entry(
            push_forward_tensor(GF, lambda p: medium_tensor(medium, p, "mu"), used)
            - medium_tensor(medium, used, "mu")
        )
        logger.debug(f"DCM check used {len(used)} samples, preimage radii {np.min(np.linalg.norm(x, axis=-1)):.4g}..")

    unit = samples / np.linalg.norm(samples, axis=-1, keepdims=True)
    boundary = r_hi * unit
    boundary_res = _max_entry(np.atleast_2d(G.apply(boundary)) - boundary)

    return ComplementarityReport(
        eps_residual=eps_res,
        mu_residual=mu_res,
        boundary_residual=boundary_res,
        n_used=len(used),
        n_skipped=len(samples) - len(used),
    )


@dataclass(frozen=True)
class DoublyComplementaryMedium:
    """The lossless construction: the medium, its reflections and the effective medium."""
    medium: LayeredMedium
    effective: LayeredMedium
    F: KelvinMap
    G: KelvinMap
    rho: float
    r1: float
    r_core: float
    complementarity: ComplementarityReport
    double_complementarity: ComplementarityReport

    @property
    def r2(self) -> float:
        return self.medium.r2

    @property
    def r3(self) -> float:
        return self.medium.r3

    @property
    def lam(self) -> float:
        return self.medium.lam

    @property
    def omega(self) -> float:
        return self.medium.omega

    @property
    def interfaces(self) -> Tuple[float, ...]:
        return (self.r_core, self.r1, self.r2, self.r3)

    def regions(self) -> Dict[str, Tuple[float, float]]:
        return {name: (a, b) for name, a, b in self.medium.region_radii}


def _uniform_layer(r_in, r_out, value, name, lossy=False) -> RadialLayer:
    tensor = ConformalRadialTensor.constant(value)
    return RadialLayer(r_in=r_in, r_out=r_out, eps=tensor, mu=tensor, lossy=lossy, name=name)


def _exterior_layers(r3: float, R0: float, coefficient: float) -> List[RadialLayer]:
    if R0 > r3 and coefficient != 1:
        return [
            _uniform_layer(r3, R0, coefficient, "exterior_annulus"),
            _uniform_layer(R0, np.inf, 1.0, "exterior"),
        ]
    return [_uniform_layer(r3, np.inf, 1.0, "exterior")]


def _sample_band(r2: float, r3: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    radii = rng.uniform(r2, r3, size=count)
    return directions * radii[:, None]


def build_dc_medium(
    r2: float,
    r3: float,
    lam: float = 1.0,
    omega: float = 1.0,
    R0: Optional[float] = None,
    core_coefficient: float = 1.0,
    exterior_coefficient: float = 1.0,
    check_samples: int = 1000,
    seed: int = 0,
    tolerance: float = 1e-12,
) -> DoublyComplementaryMedium:
    """Radial doubly complementary medium with F = Kelvin(r₂), G = Kelvin(r₃).

    Layers: core (0, r₂³/r₃²), core annulus up to r₁ = r₂²/r₃ with λρ, the lossy
    shell (r₁, r₂) with -λ(r₂/r)², the band (r₂, r₃) with λ and the exterior.
    """
    if not (0 < r2 < r3):
        raise DomainError(f"Need 0 < r2 < r3, got r2={r2}, r3={r3}", error_code="geometry")
    if not lam > 0:
        raise DomainError(f"Band coefficient must be positive, got {lam}", error_code="lambda")
    R0 = r3 if R0 is None else R0
    if R0 < r3:
        raise DomainError(f"R0 must be at least r3, got {R0}", error_code="geometry")

    rho = (r3 / r2) ** 2
    r1 = r2**2 / r3
    r_core = r2**3 / r3**2
    F = KelvinMap(r2)
    G = KelvinMap(r3)

    band_tensor = ConformalRadialTensor.constant(lam)
    shell_tensor = push_forward_conformal(F, band_tensor)
    layers = [
        _uniform_layer(0.0, r_core, core_coefficient, "core"),
        _uniform_layer(r_core, r1, lam * rho, "core_annulus"),
        RadialLayer(r_in=r1, r_out=r2, eps=shell_tensor, mu=shell_tensor, lossy=True, name="shell"),
        _uniform_layer(r2, r3, lam, "band"),
        *_exterior_layers(r3, R0, exterior_coefficient),
    ]
    regions = (
        ("core", 0.0, r_core),
        ("core_annulus", r_core, r1),
        ("shell", r1, r2),
        ("band", r2, r3),
        ("ball_r3", 0.0, r3),
        ("exterior", r3, np.inf),
    )
    medium = LayeredMedium(
        layers=tuple(layers), omega=omega, r2=r2, r3=r3, lam=lam, R0=R0,
        label="doubly_complementary", region_radii=regions,
    )
    effective = LayeredMedium(
        layers=(
            _uniform_layer(0.0, r2, core_coefficient / rho, "effective_core"),
            _uniform_layer(r2, r3, lam, "band"),
            *_exterior_layers(r3, R0, exterior_coefficient),
        ),
        omega=omega, r2=r2, r3=r3, lam=lam, R0=R0, label="effective", region_radii=regions,
    )

    samples = _sample_band(r2, r3, check_samples, seed)
    pair = verify_complementary(layers[2], layers[3], F, samples)
    double = verify_dcm(F, G, medium, samples, (r2, r3))
    scale = max(1.0, lam * rho)
    if pair.max_residual > tolerance * scale or double.max_residual > tolerance * scale:
        raise NumericalError(
            "Doubly complementary construction failed its residual checks",
            error_code="dcm_residual",
            details={"pair": pair.max_residual, "double": double.max_residual},
        )

    logger.info(
        f"Built doubly complementary medium r2={r2}, r3={r3}, lambda={lam}, rho={rho:.6g}, "
        f"residuals {pair.max_residual:.2e}/{double.max_residual:.2e}"
    )
    return DoublyComplementaryMedium(
        medium=medium, effective=effective, F=F, G=G, rho=rho, r1=r1, r_core=r_core,
        complementarity=pair, double_complementarity=double,
    )


def build_trivial_medium(r2: float, r3: float, omega: float = 1.0) -> LayeredMedium:
    """Vacuum everywhere, with the region table of the doubly complementary geometry."""
    if not (0 < r2 < r3):
        raise DomainError(f"Need 0 < r2 < r3, got r2={r2}, r3={r3}", error_code="geometry")
    r1 = r2**2 / r3
    regions = (
        ("core", 0.0, r2**3 / r3**2),
        ("core_annulus", r2**3 / r3**2, r1),
        ("shell", r1, r2),
        ("band", r2, r3),
        ("ball_r3", 0.0, r3),
        ("exterior", r3, np.inf),
    )
    return LayeredMedium(
        layers=(_uniform_layer(0.0, np.inf, 1.0, "vacuum"),),
        omega=omega, r2=r2, r3=r3, lam=1.0, R0=r3, label="trivial", region_radii=regions,
    )


def build_tilde_source(
    construction: DoublyComplementaryMedium,
    sources: Sequence[SphericalSource],
    variant: str = "electric",
    tolerance: float = 1e-12,
) -> Tuple[SphericalSource, ...]:
    """Renormalized source for the effective problem.

    ``electric``:  J̃ = 1_{ℝ³∖Ω₂} J − 1_{Ω₃∖Ω₂} F_*J + 1_{Ω₃} G_*F_*J
    ``magnetic``:  J̃ = 1_{ℝ³∖Ω₃} J + 1_{Ω₂} G_*F_*J

    Terms whose indicator excludes the image sphere are dropped.
    """
    if variant not in ("electric", "magnetic"):
        raise DomainError(f"Unknown renormalization variant '{variant}'", error_code="variant")

    r2, r3 = construction.r2, construction.r3
    GF = compose(construction.F, construction.G)
    interfaces = construction.interfaces

    tilde: List[SphericalSource] = []
    for source in sources:
        r_s = source.radius
        if any(abs(r_s - radius) <= tolerance * max(1.0, radius) for radius in interfaces):
            raise DomainError(
                f"Source sphere r={r_s} lies on an interface",
                error_code="source_on_interface",
                details={"interfaces": list(interfaces)},
            )

        dilated = push_forward_source(GF, source)
        if variant == "electric":
            if r_s > r2:
                tilde.append(source)
            reflected = push_forward_source(construction.F, source)
            if r2 < reflected.radius < r3:
                tilde.append(reflected.relocated(reflected.radius, -1.0))
            if dilated.radius < r3:
                tilde.append(dilated)
        else:
            if r_s > r3:
                tilde.append(source)
            if dilated.radius < r2:
                tilde.append(dilated)

    logger.debug(f"Renormalized {len(sources)} source(s) into {len(tilde)} sphere(s)")
    return tuple(tilde)
