from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conicflow.errors import ConfigurationError, DegenerateMetricError
from conicflow.geometry import (
    Scenario,
    TWO_PI,
    build_factor,
    fs_density,
    log_slope,
    outer_sum,
    product_scalar_curvature,
    scalar_curvature,
)


def dilated_round(f, lam2):
    w = 1.0 / (1.0 + np.exp(-(f.s + math.log(lam2))))
    return w * (1.0 - w)


def test_fs_density_at_equator():
    f = build_factor(512)
    assert fs_density(0.5) == 0.25
    j = np.argmin(np.abs(f.w - 0.5))
    assert f.fs_density[j] == pytest.approx(f.w[j] * (1 - f.w[j]), rel=1e-15)


def test_section_norm_is_w_on_cone_factor():
    f = build_factor(512, has_cone=True)
    np.testing.assert_array_equal(f.section_norm, f.w)
    assert build_factor(64).section_norm is None


@pytest.mark.parametrize("has_cone", [False, True])
def test_grid_structure(has_cone):
    f = build_factor(256, has_cone=has_cone)
    assert np.all(np.diff(f.w) > 0)
    assert 0.0 < f.w[0] and f.w[-1] < 1.0
    assert np.all(f.g > 0)
    assert f.cell_area.sum() == pytest.approx(1.0, abs=1e-14)


def test_fs_area_is_two_pi():
    f = build_factor(512)
    assert f.area(f.g) == pytest.approx(TWO_PI, rel=1e-6)


def test_curvature_density_integrates_to_two_pi():
    f = build_factor(512, has_cone=True)
    assert TWO_PI * f.integrate(f.curvature_density) == pytest.approx(TWO_PI, rel=1e-12)


def test_too_few_nodes():
    with pytest.raises(ConfigurationError):
        build_factor(8)


def test_fs_curvature_is_two():
    f = build_factor(512)
    R = scalar_curvature(f, f.g)
    assert np.max(np.abs(R - 2.0)) < 1e-8
    assert np.std(R) < 1e-3


def test_scaled_metric_halves_curvature():
    f = build_factor(128)
    q = dilated_round(f, 2.5) * (1.0 + 0.1 * f.w)
    np.testing.assert_allclose(scalar_curvature(f, 2 * q), 0.5 * scalar_curvature(f, q), rtol=1e-12)


def test_round_metric_curvature_from_area():
    f = build_factor(512)
    area = 5.0 * math.pi
    R = scalar_curvature(f, f.g * area / TWO_PI)
    assert np.allclose(R, 4 * math.pi / area, rtol=1e-10)


def test_dilated_round_spread_refines_at_second_order():
    spreads = [np.std(scalar_curvature(build_factor(N), dilated_round(build_factor(N), 3.0))) for N in (256, 512)]
    assert spreads[1] < 1e-3
    assert 3.5 < spreads[0] / spreads[1] < 4.5


def test_gauss_bonnet():
    f = build_factor(512, has_cone=True)
    q = dilated_round(f, 0.3) * (1.5 + np.cos(3 * f.w))
    ric = scalar_curvature(f, q) * q
    assert TWO_PI * f.integrate(ric) == pytest.approx(4 * math.pi, rel=1e-4)


def test_boundary_slopes():
    f = build_factor(512)
    q = dilated_round(f, 2.0) * (1.2 + np.sin(2 * f.w))
    slope = log_slope(f, q)
    assert slope[0] == pytest.approx(1.0, rel=0.05)
    assert slope[-1] == pytest.approx(-1.0, rel=0.05)


def test_nonpositive_metric_rejected():
    f = build_factor(32)
    q = f.g.copy()
    q[3] = 0.0
    with pytest.raises(DegenerateMetricError):
        scalar_curvature(f, q)


def test_product_curvature_is_additive():
    a, b = build_factor(32), build_factor(48)
    Ra, Rb = product_scalar_curvature((a, b), (a.g, 2 * b.g))
    total = outer_sum([Ra, Rb])
    assert total.shape == (32, 48)
    assert np.allclose(total, 2.0 + 1.0)


def test_dw2_of_quadratic_in_w():
    # (g f_w)_w = 4w - 6w^2 for f = w^2
    f = build_factor(512)
    val = f.dw2(f.w**2)
    exact = 4 * f.w - 6 * f.w**2
    assert np.max(np.abs(val - exact)[5:-5]) < 1e-3


@given(st.floats(0.05, 20.0), st.floats(-2.0, 2.0))
def test_curvature_scaling_property(c, shift):
    f = build_factor(64)
    q = dilated_round(f, math.exp(shift))
    np.testing.assert_allclose(scalar_curvature(f, c * q), scalar_curvature(f, q) / c, rtol=1e-9)


@given(st.integers(16, 300), st.booleans())
def test_build_factor_invariants(N, cone):
    f = build_factor(N, has_cone=cone)
    assert f.N == N
    assert np.all(np.diff(f.s) > 0)
    assert np.all((f.w > 0) & (f.w < 1))
    assert abs(f.cell_area.sum() - 1.0) < 1e-12


class TestScenarioValidation:
    def test_beta_range(self):
        with pytest.raises(ConfigurationError):
            Scenario("x", (build_factor(16, True),), (1.0,), 1.0, 0.1)

    def test_one_cone_only(self):
        with pytest.raises(ConfigurationError):
            Scenario("x", (build_factor(16, True), build_factor(16, True)), (1.0, 1.0), 0.5, 0.1)

    def test_contraction_must_be_cone_free(self):
        with pytest.raises(ConfigurationError):
            Scenario("x", (build_factor(16, True), build_factor(16)), (1.0, 1.0), 0.5, 0.1, contraction=0)

    def test_degrees(self):
        s = Scenario("x", (build_factor(16, True), build_factor(16)), (1.0, 1.0), 0.5, 0.1, contraction=1)
        assert s.degrees == pytest.approx((-3 * math.pi, -4 * math.pi))
        assert s.cone_index == 0 and s.n == 2
