#!/usr/bin/env python3
"""
Reflection maps, push-forwards and the doubly complementary construction.
"""

import numpy as np
import pytest

from core.exceptions import DomainError
from models.medium import ConformalRadialTensor, RadialLayer
from models.modes import ModeIndex, Polarization
from models.source import SourceKind, SphericalSource
from services.media import with_loss
from services.transform import (
    DilationMap,
    IdentityMap,
    KelvinMap,
    SampledMap,
    build_dc_medium,
    build_tilde_source,
    build_trivial_medium,
    compose,
    push_forward_conformal,
    push_forward_current,
    push_forward_field,
    push_forward_source,
    push_forward_tensor,
    push_forward_trace,
    verify_complementary,
    verify_dcm,
)


@pytest.fixture
def points():
    rng = np.random.default_rng(7)
    directions = rng.normal(size=(20, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    return directions * rng.uniform(0.3, 3.0, size=20)[:, None]


class TestRadialMaps:
    """Kelvin inversions, dilations and their composition."""

    def test_kelvin_is_an_involution(self, points):
        F = KelvinMap(1.3)
        np.testing.assert_allclose(F.apply(F.apply(points)), points, rtol=1e-13)
        np.testing.assert_allclose(F.inverse(points), F.apply(points), rtol=1e-15)

    def test_kelvin_fixes_its_sphere(self):
        F = KelvinMap(2.0)
        x = np.array([0.0, 1.2, 1.6])
        np.testing.assert_allclose(F.apply(x), x, rtol=1e-15)
        assert F.orientation == -1

    def test_composition_of_inversions_is_a_dilation(self, points):
        """Kelvin(r3)∘Kelvin(r2) is x ↦ (r3/r2)² x."""
        GF = compose(KelvinMap(1.0), KelvinMap(2.0))
        np.testing.assert_allclose(GF.apply(points), 4.0 * points, rtol=1e-13)
        np.testing.assert_allclose(GF.jacobian(points), DilationMap(4.0).jacobian(points), rtol=1e-12, atol=1e-13)
        assert GF.orientation == 1
        assert GF.radial(0.5) == pytest.approx(2.0)

    def test_jacobian_matches_finite_differences(self):
        F = KelvinMap(1.5)
        sampled = SampledMap(F.apply, F.inverse, orientation=-1)
        x = np.array([[0.4, -0.7, 1.1], [2.0, 0.1, -0.3]])
        np.testing.assert_allclose(F.jacobian(x), sampled.jacobian(x), atol=1e-7)

    def test_origin_is_rejected(self):
        with pytest.raises(DomainError):
            KelvinMap(1.0).apply(np.zeros(3))
        with pytest.raises(DomainError):
            KelvinMap(0.0)
        with pytest.raises(DomainError):
            compose()


class TestPushForward:
    """Change-of-variables rules."""

    def test_tensor_rule_against_closed_form(self, points):
        F = KelvinMap(1.0)
        band = ConformalRadialTensor.constant(2.5)
        closed = push_forward_conformal(F, band)
        assert closed.power == 2
        assert closed.coefficient == pytest.approx(-2.5)
        np.testing.assert_allclose(push_forward_tensor(F, band, points), closed.tensor(points), rtol=1e-12, atol=1e-12)

    def test_pushing_twice_returns_the_tensor(self, points):
        """F is an involution, so F_*F_*A = A."""
        F = KelvinMap(1.4)
        A = ConformalRadialTensor.constant(3.0)
        twice = push_forward_conformal(F, push_forward_conformal(F, A))
        np.testing.assert_allclose(twice.tensor(points), A.tensor(points), rtol=1e-13)

    def test_dilation_scales_constants(self):
        pushed = push_forward_conformal(DilationMap(4.0), ConformalRadialTensor.constant(2.0))
        assert pushed.is_constant
        assert pushed.coefficient == pytest.approx(0.5)

    def test_identity_leaves_everything(self, points):
        E = np.ones((len(points), 3), dtype=complex)
        y, image = push_forward_field(IdentityMap(), E, points)
        np.testing.assert_allclose(y, points)
        np.testing.assert_allclose(image, E)

    def test_field_rule_inverts_the_transposed_jacobian(self, points):
        F = KelvinMap(1.0)
        E = np.tile(np.array([1.0, -2.0, 0.5j]), (len(points), 1))
        _, image = push_forward_field(F, E, points)
        J = F.jacobian(points)
        np.testing.assert_allclose(np.einsum("pji,pj->pi", J, image), E, atol=1e-12)

    def test_current_rule_divides_by_the_determinant(self):
        x = np.array([0.0, 0.0, 2.0])
        _, image = push_forward_current(DilationMap(2.0), np.array([1.0, 0.0, 0.0]), x)
        np.testing.assert_allclose(image, [1.0 / 8.0, 0.0, 0.0])
        _, contravariant = push_forward_current(DilationMap(2.0), np.array([1.0, 0.0, 0.0]), x, contravariant=True)
        np.testing.assert_allclose(contravariant, [0.25, 0.0, 0.0])

    def test_trace_rule_on_the_fixed_sphere(self):
        """On its own sphere a Kelvin map flips the orientation and keeps tangential lengths."""
        x = np.array([0.0, 0.0, 1.0])
        g = np.array([1.0, 0.0, 0.0])
        y, image = push_forward_trace(KelvinMap(1.0), g, x)
        np.testing.assert_allclose(y, x)
        np.testing.assert_allclose(image, -g, atol=1e-14)

    def test_surface_current_moves_with_radius_factor(self):
        mode = ModeIndex(2, 0, Polarization.TE)
        source = SphericalSource.surface_current(1.5, {mode: 1.0})
        image = push_forward_source(KelvinMap(1.0), source)
        assert image.radius == pytest.approx(1.0 / 1.5)
        assert image.amplitudes[mode] == pytest.approx(-1.5 / (1.0 / 1.5))

    def test_dipole_moment_follows_the_jacobian(self):
        source = SphericalSource.point_dipole(2.0, (1.0, 0.0, 1.0), direction=(0.0, 0.0, 1.0))
        image = push_forward_source(KelvinMap(1.0), source)
        assert image.kind == SourceKind.POINT_DIPOLE
        assert image.radius == pytest.approx(0.5)
        # tangential part shrinks by s²/r², radial part flips before the orientation sign
        np.testing.assert_allclose(image.moment, [-0.25, 0.0, 0.25], atol=1e-14)

    def test_non_radial_map_is_rejected(self):
        shear = SampledMap(lambda p: p + np.array([p[1], 0.0, 0.0]), lambda q: q - np.array([q[1], 0.0, 0.0]), 1)
        with pytest.raises(DomainError):
            push_forward_source(shear, SphericalSource.point_dipole(1.0, (0, 0, 1)))


class TestDoublyComplementaryMedium:
    """The radial construction and its residual checks."""

    @pytest.mark.parametrize("r2,r3,lam", [(1.0, 2.0, 1.0), (1.0, 4.0, 1.0), (1.0, 2.0, 3.0)])
    def test_residuals_vanish(self, r2, r3, lam):
        construction = build_dc_medium(r2, r3, lam=lam)
        assert construction.complementarity.max_residual < 1e-12 * max(1.0, lam * (r3 / r2) ** 2)
        assert construction.double_complementarity.max_residual < 1e-12 * max(1.0, lam * (r3 / r2) ** 2)
        assert construction.complementarity.n_used > 0

    def test_radii(self, dc_medium):
        assert dc_medium.rho == pytest.approx(4.0)
        assert dc_medium.r1 == pytest.approx(0.5)
        assert dc_medium.r_core == pytest.approx(0.25)
        assert dc_medium.interfaces == pytest.approx((0.25, 0.5, 1.0, 2.0))

    def test_layer_coefficients(self, dc_medium):
        medium = dc_medium.medium
        names = [layer.name for layer in medium.layers]
        assert names == ["core", "core_annulus", "shell", "band", "exterior"]
        assert medium.layers[1].eps.coefficient == pytest.approx(4.0)
        shell = medium.layers[2]
        assert shell.lossy
        assert shell.eps.value(0.8) == pytest.approx(-1.5625)
        assert medium.lossy_layers == (2,)

    def test_loss_only_in_the_shell(self, dc_medium):
        coefficients = with_loss(dc_medium.medium, 1e-3)
        assert coefficients.eps(0.8) == pytest.approx(-1.5625 + 1e-3j)
        assert coefficients.mu(1.5) == pytest.approx(1.0)
        assert coefficients.eps(0.3) == pytest.approx(4.0)

    def test_effective_medium(self, dc_medium):
        effective = dc_medium.effective
        assert not effective.has_lossy_layer
        assert effective.layers[0].eps.coefficient == pytest.approx(0.25)
        assert effective.layers[0].r_out == pytest.approx(1.0)

    def test_exterior_annulus(self):
        construction = build_dc_medium(1.0, 2.0, R0=3.0, exterior_coefficient=2.0)
        names = [layer.name for layer in construction.medium.layers]
        assert names[-2:] == ["exterior_annulus", "exterior"]

    @pytest.mark.parametrize("kwargs", [
        {"r2": 2.0, "r3": 1.0},
        {"r2": 1.0, "r3": 2.0, "lam": -1.0},
        {"r2": 1.0, "r3": 2.0, "R0": 1.5},
    ])
    def test_invalid_geometry(self, kwargs):
        with pytest.raises(DomainError):
            build_dc_medium(**kwargs)

    def test_mismatched_pair_reports_the_gap(self, dc_medium, points):
        two = ConformalRadialTensor.constant(2.0)
        band = RadialLayer(1.0, 2.0, two, two, name="band")
        report = verify_complementary(dc_medium.medium.layers[2], band, dc_medium.F, points)
        assert report.n_used > 0
        assert report.eps_residual == pytest.approx(1.0)
        assert report.boundary_residual < 1e-14

    def test_vacuum_is_not_doubly_complementary(self, dc_medium, points):
        """(G∘F)_* I = I/ρ on the band, so vacuum misses by 1 − 1/4."""
        medium = build_trivial_medium(1.0, 2.0)
        report = verify_dcm(dc_medium.F, dc_medium.G, medium, points, (1.0, 2.0))
        assert report.eps_residual == pytest.approx(0.75)
        assert report.mu_residual == pytest.approx(0.75)
        assert report.boundary_residual < 1e-14

    def test_trivial_medium_keeps_the_region_table(self):
        medium = build_trivial_medium(1.0, 2.0)
        assert len(medium.layers) == 1
        assert medium.region("shell") == pytest.approx((0.5, 1.0))
        assert not medium.has_lossy_layer


class TestTildeSource:
    """Renormalized sources of the effective problem."""

    @staticmethod
    def _current(radius):
        return SphericalSource.surface_current(radius, {ModeIndex(1, 0, Polarization.TE): 1.0})

    def test_exterior_source_keeps_itself_and_its_reflections(self, dc_medium):
        tilde = build_tilde_source(dc_medium, [self._current(3.0)])
        assert [s.radius for s in tilde] == pytest.approx([3.0])

    def test_band_source(self, dc_medium):
        """A band source keeps itself; its reflection and dilation fall outside the band and B_r3."""
        tilde = build_tilde_source(dc_medium, [self._current(1.5)])
        radii = sorted(s.radius for s in tilde)
        assert radii == pytest.approx([1.5])

    def test_shell_source(self, dc_medium):
        """A shell source survives only as its sign-flipped reflection in the band."""
        tilde = build_tilde_source(dc_medium, [self._current(0.8)])
        radii = sorted(s.radius for s in tilde)
        assert radii == pytest.approx([1.25])
        reflected = tilde[0]
        assert reflected.amplitudes[ModeIndex(1, 0, Polarization.TE)] == pytest.approx(0.8 / 1.25)

    def test_core_source_dilates(self, dc_medium):
        tilde = build_tilde_source(dc_medium, [self._current(0.2)])
        assert [s.radius for s in tilde] == pytest.approx([0.8])

    def test_magnetic_variant(self, dc_medium):
        tilde = build_tilde_source(dc_medium, [self._current(0.2)], variant="magnetic")
        assert [s.radius for s in tilde] == pytest.approx([0.8])
        assert build_tilde_source(dc_medium, [self._current(1.5)], variant="magnetic") == ()

    def test_interface_source_is_rejected(self, dc_medium):
        with pytest.raises(DomainError):
            build_tilde_source(dc_medium, [self._current(2.0)])
        with pytest.raises(DomainError):
            build_tilde_source(dc_medium, [self._current(1.5)], variant="other")
