#!/usr/bin/env python3
"""
Spectral solver tests: layer bases, source coupling, field evaluation and limit fields.
"""

import numpy as np
import pytest
from scipy.special import factorial2, spherical_jn, spherical_yn

from core.exceptions import DomainError, RefusalError, ResonanceError
from models.modes import ModeIndex, Polarization
from models.source import CurrentFlavor, SphericalSource
from services.layer_basis import ConstantBasis
from services.solver import SolverOptions, SpectralSolver, free_dipole_field, tangential_null_ratio
from services.transform import build_tilde_source, build_trivial_medium

TE = Polarization.TE
TM = Polarization.TM


def surface_current(radius, n=2, m=0, pol=TE, amplitude=1.0, flavor=CurrentFlavor.ELECTRIC):
    return SphericalSource.surface_current(radius, {ModeIndex(n, m, pol): amplitude}, flavor=flavor)


class TestLayerBases:
    """Fundamental pairs per layer."""

    @pytest.mark.parametrize("delta", [0.0, 1e-3])
    def test_wronskian_is_constant_across_each_layer(self, solver, dc_medium, delta):
        medium = dc_medium.medium
        for pol in (TE, TM):
            bases = solver.layer_bases(medium, delta, pol, 8)
            for layer, basis in zip(medium.layers, bases):
                lo = layer.r_in if layer.r_in > 0 else 0.1 * layer.r_out
                hi = layer.r_out if np.isfinite(layer.r_out) else 2.0 * layer.r_in
                a = np.linalg.det(basis.columns(lo + 0.2 * (hi - lo)))
                b = np.linalg.det(basis.columns(lo + 0.8 * (hi - lo)))
                np.testing.assert_allclose(a, b, rtol=1e-8, err_msg=f"{layer.name} {pol.value}")

    def test_evaluation_paths(self, solver, dc_medium):
        lossless = [b.kind for b in solver.layer_bases(dc_medium.medium, 0.0, TE, 4)]
        lossy = [b.kind for b in solver.layer_bases(dc_medium.medium, 1e-3, TE, 4)]
        assert lossless == ["closed_form", "closed_form", "pulled_back", "closed_form", "closed_form"]
        assert lossy[2] == "integrated"

    def test_whole_space_layer_is_gauged_at_the_wavelength(self):
        basis = ConstantBasis(np.arange(1, 6), 1.0, 1.0, 2.0, 0.0, np.inf, outgoing=True)
        assert basis.regular_gauge == pytest.approx(0.5)
        assert basis.singular_gauge == pytest.approx(0.5)
        a = np.linalg.det(basis.columns(0.4))
        b = np.linalg.det(basis.columns(1.7))
        assert np.all(np.isfinite(a))
        np.testing.assert_allclose(a, b, rtol=1e-8)

    def test_fundamental_pair_single_order(self, solver, dc_medium):
        band = dc_medium.medium.layers[3]
        pair = solver.fundamental_pair(band, 5, TM, 0.0)
        assert pair.columns(1.5).shape == (1, 2, 2)
        with pytest.raises(DomainError):
            solver.fundamental_pair(band, 0, TM, 0.0)


class TestSourceCoupling:
    """Single-mode solves against closed forms."""

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_vacuum_mode_matches_green_function(self, solver, vacuum, n):
        """u = −r r_s² j_n(r_s) h_n(r) a outside and −r r_s² h_n(r_s) j_n(r) a inside."""
        r_s, a = 1.5, 0.7 - 0.2j
        solution = solver.solve_sources(vacuum, surface_current(r_s, n=n, amplitude=a), 0.0, n)
        for r in (0.6, 2.7):
            u = solution.states(TE, r)[n - 1, 0, 0]
            if r > r_s:
                expected = -r * r_s**2 * spherical_jn(n, r_s) * (spherical_jn(n, r) + 1j * spherical_yn(n, r)) * a
            else:
                expected = -r * r_s**2 * (spherical_jn(n, r_s) + 1j * spherical_yn(n, r_s)) * spherical_jn(n, r) * a
            assert u == pytest.approx(expected, rel=1e-10)

    def test_trace_jump_at_the_source(self, solver, dc_medium):
        a = 2.0 - 1.0j
        source = surface_current(1.5, n=3, m=1, amplitude=a)
        solution = solver.solve_sources(dc_medium.medium, source, 1e-2, 3)
        jump = solution.states(TE, 1.5, side="outer") - solution.states(TE, 1.5, side="inner")
        np.testing.assert_allclose(jump[2, 0], [0.0, 1.5 * a], atol=1e-10 * abs(a))

    def test_te_tm_duality_in_vacuum(self, solver, vacuum):
        te = solver.solve_sources(vacuum, surface_current(1.2, n=3, pol=TE), 0.0, 3)
        tm = solver.solve_sources(
            vacuum, surface_current(1.2, n=3, pol=TM, flavor=CurrentFlavor.MAGNETIC), 0.0, 3
        )
        for r in (0.5, 2.0):
            np.testing.assert_allclose(tm.states(TM, r), -te.states(TE, r), rtol=1e-12)

    def test_closed_form_matches_integration(self, solver, dc_medium):
        source = SphericalSource.surface_current(
            1.5, {ModeIndex(n, 0, pol): 1.0 for n in range(1, 5) for pol in (TE, TM)}
        )
        closed = solver.solve_sources(dc_medium.medium, source, 1e-2, 4)
        integrated = solver.solve_sources(dc_medium.medium, source, 1e-2, 4, force_ode=True)
        for pol in (TE, TM):
            for r in (0.1, 0.4, 0.7, 1.3, 1.8, 2.5):
                np.testing.assert_allclose(
                    integrated.states(pol, r), closed.states(pol, r), rtol=1e-7, atol=1e-12
                )

    def test_zero_source(self, solver, dc_medium):
        solution = solver.solve_sources(dc_medium.medium, surface_current(1.5, amplitude=0.0), 1e-2, 4)
        fields = solution.field_at(np.array([[0.0, 0.3, 1.2]]))
        assert np.all(fields["E"] == 0)
        assert solution.norm((2.0, 3.0)) == 0.0

    def test_norm_of_a_difference(self, solver, vacuum):
        one = solver.solve_sources(vacuum, surface_current(1.5, amplitude=1.0), 0.0, 2)
        three = solver.solve_sources(vacuum, surface_current(1.5, amplitude=3.0), 0.0, 2)
        norm = solver.norm_L2(one, (2.0, 3.0))
        assert norm > 0
        assert solver.norm_L2(three, (2.0, 3.0), minus=one) == pytest.approx(2.0 * norm, rel=1e-8)
        assert solver.norm_L2(one, (2.0, 3.0), minus=one) == 0.0
        points = np.array([[0.0, 0.5, 2.4]])
        np.testing.assert_array_equal(solver.field_eval(three, points)["E"], three.field_at(points)["E"])

    def test_mode_coefficients_per_segment(self, solver, vacuum):
        mode = ModeIndex(2, 0, TE)
        coefficients = solver.solve_mode(vacuum, mode, surface_current(1.5), 0.0)
        assert coefficients.radii[1] == pytest.approx(1.5)
        assert coefficients.amplitudes[0, 1] == 0
        assert coefficients.amplitudes[-1, 0] == 0
        assert abs(coefficients.amplitudes[-1, 1]) > 0


class TestPointDipole:
    """Dipole fields against the free-space closed form."""

    def test_trivial_medium_reproduces_free_dipole(self, solver, vacuum):
        position = np.array([0.0, 0.0, 1.5])
        moment = (1.0, 0.0, 0.5j)
        source = SphericalSource.point_dipole(1.5, moment, direction=(0.0, 0.0, 1.0))
        solution = solver.solve_full(vacuum, source, 0.0, n_max=40)
        points = np.array([[0.4, 0.3, 0.5], [2.0, -1.0, 2.2], [0.0, 2.8, 0.4]])
        numeric = solution.field_at(points)
        exact = free_dipole_field(points, position, moment)
        for key in ("E", "H"):
            np.testing.assert_allclose(numeric[key], exact[key], rtol=1e-6, atol=1e-8)

    def test_off_axis_dipole_uses_all_azimuths(self, solver, vacuum):
        source = SphericalSource.point_dipole(1.5, (0.0, 1.0, 0.0), direction=(1.0, 0.0, 1.0))
        solution = solver.solve_sources(vacuum, source, 0.0, 6)
        assert solution.azimuths(TE).tolist() == list(range(-6, 7))

    def test_dipole_sphere_is_excluded_from_norms(self, solver, vacuum):
        source = SphericalSource.point_dipole(1.5, (0.0, 0.0, 1.0))
        solution = solver.solve_sources(vacuum, source, 0.0, 10)
        assert solution.excluded_bands() == [pytest.approx((1.47, 1.53))]
        assert np.isfinite(solution.norm((1.0, 2.0)))


class TestSolverErrors:
    """Failure modes of the solver."""

    def test_source_on_interface(self, solver, dc_medium):
        with pytest.raises(DomainError) as exc_info:
            solver.solve_sources(dc_medium.medium, surface_current(1.0), 1e-2, 4)
        assert exc_info.value.error_code == "source_on_interface"

    def test_negative_loss(self, solver, dc_medium):
        with pytest.raises(DomainError):
            solver.solve_sources(dc_medium.medium, surface_current(1.5), -1e-3, 4)

    def test_point_on_a_source_sphere_needs_a_side(self, solver, vacuum):
        solution = solver.solve_sources(vacuum, surface_current(1.5), 0.0, 2)
        with pytest.raises(DomainError) as exc_info:
            solution.field_at(np.array([[0.0, 0.0, 1.5]]))
        assert exc_info.value.error_code == "side_required"
        solution.field_at(np.array([[0.0, 0.0, 1.5]]), side="outer")

    def test_unbounded_norm_region(self, solver, vacuum):
        solution = solver.solve_sources(vacuum, surface_current(1.5), 0.0, 2)
        with pytest.raises(DomainError):
            solution.norm((1.0, float("inf")))

    def test_lossless_series_is_refused(self, solver, dc_medium):
        dipole = SphericalSource.point_dipole(1.5, (0.0, 0.0, 1.0))
        with pytest.raises(RefusalError) as exc_info:
            solver.solve_full(dc_medium.medium, dipole, 0.0)
        assert exc_info.value.error_code == "lossless_series"

    def test_singular_mode_is_reported(self, settings, dc_medium):
        strict = SpectralSolver(settings, SolverOptions(singular_tolerance=2.0))
        with pytest.raises(ResonanceError) as exc_info:
            strict.solve_sources(dc_medium.medium, surface_current(1.5, n=2), 1e-2, 2)
        assert exc_info.value.details["n"] == 2
        assert exc_info.value.details["pol"] == "TE"


class TestTruncation:
    """Mode truncation and the adaptive tail check."""

    def test_order_grows_with_log_inverse_loss(self, solver, dc_medium):
        dipole = SphericalSource.point_dipole(1.5, (0.0, 0.0, 1.0))
        assert solver.truncation_order(dc_medium.medium, 1e-6, dipole) >= 40
        assert solver.truncation_order(dc_medium.medium, 1e-2, dipole) == 14

    def test_finite_source_uses_its_own_order(self, solver, dc_medium):
        assert solver.truncation_order(dc_medium.medium, 1e-8, surface_current(1.5, n=3)) == 3

    def test_tail_below_tolerance(self, solver, vacuum):
        dipole = SphericalSource.point_dipole(1.0, (0.0, 0.0, 1.0))
        solution = solver.solve_full(vacuum, dipole, 0.0)
        assert solution.tail_estimate <= solver.options.truncation.tail_tolerance
        assert solution.n_max >= solver.options.truncation.n_floor

    def test_trivial_medium_solve_settles_below_the_cap(self, solver):
        medium = build_trivial_medium(1.0, 2.0)
        dipole = SphericalSource.point_dipole(3.0, (0.0, 0.0, 1.0))
        assert solver.default_tail_regions(medium, [dipole]) == [pytest.approx((2.0, 2.4)), pytest.approx((3.75, 4.0))]
        solution = solver.solve_full(medium, dipole, 1e-3)
        assert solution.n_max < solver.options.truncation.n_cap
        assert solution.tail_estimate <= solver.options.truncation.tail_tolerance
        points = np.array([[0.3, 0.0, 1.1], [0.0, 2.0, 5.5]])
        numeric = solution.field_at(points)
        exact = free_dipole_field(points, np.array([0.0, 0.0, 3.0]), (0.0, 0.0, 1.0))
        np.testing.assert_allclose(numeric["E"], exact["E"], rtol=1e-6, atol=1e-8)

    def test_lossy_layers_stay_whole_in_tail_regions(self, solver, dc_medium):
        dipole = SphericalSource.point_dipole(1.2, (0.0, 0.0, 1.0))
        regions = solver.default_tail_regions(dc_medium.medium, [dipole])
        assert regions == [pytest.approx((0.5, 1.0)), pytest.approx((2.0, 4.0))]

    def test_starting_order_can_be_raised(self, solver):
        medium = build_trivial_medium(1.0, 2.0)
        dipole = SphericalSource.point_dipole(1.2, (0.0, 0.0, 1.0))
        plain = solver.solve_full(medium, dipole, 1e-2)
        raised = solver.solve_full(medium, dipole, 1e-2, n_min=plain.n_max + 10)
        assert raised.n_max >= plain.n_max + 10
        assert solver.solve_full(medium, dipole, 1e-2, n_max=8, n_min=30).n_max == 8

    @pytest.mark.asyncio
    async def test_async_solve_matches_sync(self, solver, dc_medium):
        source = surface_current(1.5, n=3)
        concurrent = await solver.solve_full_async(dc_medium.medium, source, 1e-2)
        direct = solver.solve_full(dc_medium.medium, source, 1e-2)
        np.testing.assert_allclose(concurrent.states(TE, 0.7), direct.states(TE, 0.7))


class TestLimitFields:
    """δ = 0 fields rebuilt from the effective problem."""

    @pytest.mark.parametrize("pol", [TE, TM])
    def test_pulled_back_field_solves_the_lossless_problem(self, solver, dc_medium, pol):
        source = surface_current(3.0, n=2, m=1, pol=pol)
        tilde = solver.solve_effective(dc_medium, build_tilde_source(dc_medium, [source]), n_max=2)
        limit = solver.extend_limit_fields(dc_medium, tilde, [source])
        direct = solver.solve_sources(dc_medium.medium, source, 0.0, 2)
        for r in (0.1, 0.4, 0.7, 1.5, 2.5, 4.0):
            np.testing.assert_allclose(limit.states(pol, r), direct.states(pol, r), rtol=1e-7)

    def test_continuous_across_the_reflection_spheres(self, solver, dc_medium):
        source = surface_current(3.0, n=1)
        tilde = solver.solve_effective(dc_medium, build_tilde_source(dc_medium, [source]), n_max=1)
        limit = solver.extend_limit_fields(dc_medium, tilde, [source])
        for radius in (dc_medium.r1, dc_medium.r2):
            np.testing.assert_allclose(
                limit.states(TE, radius, side="inner"), limit.states(TE, radius, side="outer"), rtol=1e-12
            )

    def test_refused_inside_the_resonant_annulus(self, solver, dc_medium):
        source = surface_current(1.5, n=1)
        tilde = solver.solve_effective(dc_medium, build_tilde_source(dc_medium, [source]), n_max=1)
        with pytest.raises(RefusalError):
            solver.extend_limit_fields(dc_medium, tilde, [source])


class TestTangentialNullRatio:
    """Singular-to-regular ratio of vacuum fields with vanishing tangential E."""

    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_matches_bessel_values(self, n):
        z = 0.7
        scale = factorial2(2 * n + 1, exact=True) * factorial2(2 * n - 1, exact=True)
        te = scale * spherical_jn(n, z) / spherical_yn(n, z)
        riccati_j = spherical_jn(n, z) + z * spherical_jn(n, z, derivative=True)
        riccati_y = spherical_yn(n, z) + z * spherical_yn(n, z, derivative=True)
        tm = scale * riccati_j / riccati_y
        assert tangential_null_ratio(n, z) == pytest.approx(te, rel=1e-10)
        assert tangential_null_ratio(n, z, pol=TM) == pytest.approx(tm, rel=1e-10)

    def test_tracks_the_sphere_radius_power(self):
        r2 = 0.5
        ratios = [abs(tangential_null_ratio(n, r2)) / r2 ** (2 * n + 1) for n in range(1, 31)]
        assert all(0.5 < value < 2.0 for value in ratios)
