#!/usr/bin/env python3
"""
Lossy coefficients, region tables and dissipated power.
"""

import math

import numpy as np
import pytest

from core.exceptions import DomainError
from models.medium import ConformalRadialTensor
from services.media import (
    log_mode_norm_weight,
    mode_norm_weight,
    power,
    region_table,
    with_loss,
)
from services.resonance import free_mode_norms


class RecordingFields:
    """Field stand-in exposing only what power() reads."""

    def __init__(self, medium, delta, squared=2.5):
        self.medium = medium
        self.delta = delta
        self.squared = squared
        self.regions = []

    def norm_squared(self, region):
        self.regions.append(region)
        return self.squared


class TestLossyCoefficients:
    """ε_δ and μ_δ of a layered medium."""

    def test_array_evaluation(self, dc_medium):
        coefficients = with_loss(dc_medium.medium, 0.01)
        values = coefficients.eps(np.array([0.3, 0.8, 1.5, 3.0]))
        np.testing.assert_allclose(values, [4.0, -1.5625 + 0.01j, 1.0, 1.0])

    def test_scalar_evaluation(self, dc_medium):
        coefficients = with_loss(dc_medium.medium, 1e-3)
        value = coefficients.eps(0.8)
        assert isinstance(value, complex)
        assert value == pytest.approx(-1.5625 + 1e-3j)
        assert coefficients.mu(0.3) == pytest.approx(4.0)

    def test_conformal_tensor_on_scalars_and_arrays(self):
        tensor = ConformalRadialTensor(coefficient=-1.0, power=2, pivot=1.0)
        assert tensor.value(0.5) == -4.0
        assert isinstance(tensor.value(0.5), complex)
        np.testing.assert_allclose(tensor.value(np.array([0.5, 2.0])), [-4.0, -0.25])

    def test_interface_side(self, dc_medium):
        coefficients = with_loss(dc_medium.medium, 0.01)
        assert coefficients.eps(1.0, side="inner") == pytest.approx(-1.0 + 0.01j)
        assert coefficients.eps(1.0, side="outer") == pytest.approx(1.0)

    def test_tensors_are_isotropic(self, dc_medium):
        coefficients = with_loss(dc_medium.medium, 0.01)
        tensor = coefficients.mu_tensor(np.array([[0.0, 0.8, 0.0], [2.5, 0.0, 0.0]]))
        assert tensor.shape == (2, 3, 3)
        np.testing.assert_allclose(tensor[0], (-1.5625 + 0.01j) * np.eye(3))
        np.testing.assert_allclose(tensor[1], np.eye(3))
        np.testing.assert_allclose(coefficients.eps_tensor(np.array([0.0, 0.0, 0.3])), 4.0 * np.eye(3))

    def test_layer_constants(self, dc_medium):
        rows = dict((name, eps) for name, eps, _ in with_loss(dc_medium.medium, 0.1).layer_constants())
        assert rows["shell"] == pytest.approx(-1.0 + 0.1j)
        assert rows["band"] == pytest.approx(1.0)

    def test_negative_loss_is_rejected(self, dc_medium):
        with pytest.raises(DomainError):
            with_loss(dc_medium.medium, -1e-3)


class TestRegions:
    """Named annuli."""

    def test_construction_regions(self, dc_medium):
        table = region_table(dc_medium.medium)
        assert table["shell"] == pytest.approx((0.5, 1.0))
        assert table["ball_r3"] == pytest.approx((0.0, 2.0))
        assert table["exterior"][1] == math.inf

    def test_layer_names_without_a_table(self, vacuum):
        assert region_table(vacuum) == {"vacuum": (0.0, math.inf)}


class TestPower:
    """Dissipated power δ·‖(E, H)‖²."""

    def test_scales_with_delta(self, dc_medium):
        fields = RecordingFields(dc_medium.medium, 1e-3)
        assert power(fields) == pytest.approx(2.5e-3)
        assert power(fields, 1e-2, region=(0.0, 2.0)) == pytest.approx(2.5e-2)
        assert fields.regions == ["shell", (0.0, 2.0)]

    def test_lossless_limit_is_zero(self, dc_medium):
        fields = RecordingFields(dc_medium.medium, 0.0)
        assert power(fields) == 0.0
        assert fields.regions == []

    def test_medium_without_lossy_layer(self, vacuum):
        assert power(RecordingFields(vacuum, 1e-3)) == 0.0

    def test_explicit_region_is_integrated_without_loss(self, vacuum):
        fields = RecordingFields(vacuum, 1e-3)
        assert power(fields, region=(0.0, 2.0)) == pytest.approx(2.5e-3)
        assert fields.regions == [(0.0, 2.0)]

    def test_negative_loss_is_rejected(self, dc_medium):
        with pytest.raises(DomainError):
            power(RecordingFields(dc_medium.medium, 1e-3), -1.0)

    def test_power_of_a_solved_field(self, solver, dc_medium):
        from models.source import SphericalSource
        source = SphericalSource.point_dipole(1.5, (0.0, 0.0, 1.0))
        solution = solver.solve_full(dc_medium.medium, source, 1e-2, n_max=20)
        value = power(solution)
        assert value > 0
        assert value == pytest.approx(1e-2 * solution.norm_squared("shell"), rel=1e-12)


class TestModeNormWeight:
    """Small-ball norms of free regular modes."""

    @pytest.mark.parametrize("R", [0.1, 0.3])
    def test_matches_quadrature_to_leading_order(self, R):
        exact = free_mode_norms(12, R)
        approx = mode_norm_weight(np.arange(1, 13), R)
        np.testing.assert_allclose(exact / approx, 1.0, rtol=0.1)

    def test_log_form(self):
        assert log_mode_norm_weight(3, 0.5) == pytest.approx(math.log(4.0) + 7.0 * math.log(0.5))

    def test_radius_must_be_positive(self):
        with pytest.raises(DomainError):
            mode_norm_weight(2, 0.0)
