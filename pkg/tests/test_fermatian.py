import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heco.fermatian import (
    BouncePattern, Direction, Surface, deflection_table, double_collision_sectors,
    exact_shadow_length, find_separatrices, homologous_pairs, impact_arc_distance,
    sector_formulas, shadow_interval, shadow_length, trace_ray,
)
from heco.kinematics import initial_conditions
from heco.potential import HardWallParams

GEOM = HardWallParams()
T20 = math.radians(20)


def _reflection_residual(ray):
    """Max violation of the law of reflection over all bounces."""
    worst = 0.0
    for j, ((x, z), surf) in enumerate(ray.bounce_points):
        (a0, a1), (b0, b1) = ray.segments[j], ray.segments[j + 1]
        din = np.subtract(a1, a0)
        dout = np.subtract(b1, b0)
        din /= np.linalg.norm(din)
        dout /= np.linalg.norm(dout)
        n = np.array([0.0, 1.0]) if surf is Surface.FLAT else np.array([x, z]) / math.hypot(x, z)
        expected = din - 2 * np.dot(din, n) * n
        worst = max(worst, float(np.abs(expected - dout).max()))
    return worst


def test_initial_conditions_examples():
    (x, z), (px, pz) = initial_conditions(0.0, T20, 10.0, 10.27)
    assert float(x) == pytest.approx(-10.27 * math.tan(T20))
    (x, z), (px, pz) = initial_conditions(1.5, 0.0, 10.0)
    assert float(x) == 1.5 and float(px) == 0.0
    from heco.constants import HE4
    assert -float(pz) / HE4.hbar == pytest.approx(4.375, abs=1e-3)


def test_trivial_rays():
    far = trace_ray(30.0, 0.0)
    assert far.surfaces == (Surface.FLAT,) and far.theta_d == pytest.approx(0.0, abs=1e-15)
    apex = trace_ray(0.0, 0.0)
    assert apex.surfaces == (Surface.ADSORBATE,)
    assert apex.scattering_angle == pytest.approx(math.pi, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-7, 7), st.floats(0, math.radians(80)))
def test_rays_obey_reflection_and_chain(b, theta_i):
    ray = trace_ray(b, theta_i)
    assert 1 <= ray.n_bounces <= 2
    for s0, s1 in zip(ray.segments, ray.segments[1:]):
        assert s0[1] == pytest.approx(s1[0], abs=1e-12)
    assert _reflection_residual(ray) < 1e-12
    assert math.hypot(*ray.direction_out) == pytest.approx(1.0, abs=1e-14)
    grazing = ray.ray_class.direction is Direction.GRAZING
    assert grazing == (abs(abs(ray.theta_d) - math.pi / 2) < 1e-9)


def test_normal_incidence_deflection_is_odd():
    bs, rays = deflection_table(0.0, n_samples=801, b_range=(-6, 6))
    th = np.array([r.theta_d for r in rays])
    assert np.allclose(th, -th[::-1], atol=1e-10)


@pytest.mark.parametrize("deg", [0, 10, 20, 40])
def test_separatrix_ordering(deg):
    seps = find_separatrices(math.radians(deg))
    assert seps.is_ordered()
    assert seps.F2p == seps.F2


def test_separatrices_normal_incidence_mirror():
    s = find_separatrices(0.0)
    assert s.F1 == pytest.approx(-s.F7, abs=1e-9)
    assert s.F3 == pytest.approx(-s.F6, abs=1e-9)


def test_separatrix_deflections_at_20_degrees():
    s = find_separatrices(T20)
    assert trace_ray(s.Falpha, T20).theta_d == pytest.approx(0.0, abs=1e-9)
    assert trace_ray(s.Fbeta, T20).theta_d == pytest.approx(0.0, abs=1e-9)
    assert trace_ray(s.F4, T20).theta_d == pytest.approx(-T20, abs=1e-9)
    assert trace_ray(s.F5, T20).theta_d == pytest.approx(T20, abs=1e-9)
    assert s.theta_d_max == pytest.approx(-T20 + 2 * GEOM.corner_angle, abs=1e-6)


def test_normal_deflection_only_at_alpha_and_beta():
    s = find_separatrices(T20)
    pairs = homologous_pairs(0.0, T20)
    assert len(pairs) == 1
    b_single, b_double = pairs[0]
    assert b_single == pytest.approx(s.Fbeta, abs=1e-9)
    assert b_double == pytest.approx(s.Falpha, abs=1e-9)


def test_backward_limit_of_double_partners():
    s = find_separatrices(T20)
    inside = 0.5 * s.theta_d_max
    assert any(bd is not None for _, bd in homologous_pairs(inside, T20))
    beyond = s.theta_d_max - 0.05
    pairs = homologous_pairs(beyond, T20)
    assert pairs and all(bd is None for _, bd in pairs)


@pytest.mark.parametrize("theta_d", [0.05, 0.15, 0.3])
def test_forward_pair_arc_distance(theta_d):
    for bs, bd in homologous_pairs(theta_d, T20):
        assert trace_ray(bd, T20).ray_class.bounce_pattern is BouncePattern.FLAT_THEN_ADSORBATE
        assert impact_arc_distance(bs, bd, T20) == pytest.approx(math.pi / 2 - T20, abs=1e-9)


@pytest.mark.parametrize("theta_d", [0.6, 1.0])
def test_adsorbate_first_pair_arc_distance(theta_d):
    for bs, bd in homologous_pairs(theta_d, T20):
        assert impact_arc_distance(bs, bd, T20) == pytest.approx(
            math.pi / 2 - abs(theta_d), abs=1e-9)


def test_shadow_closed_form_limits():
    assert shadow_length(0.0) == 0.0
    assert math.isinf(shadow_length(math.pi / 2))
    assert shadow_length(math.radians(89.999)) > 1e3


@pytest.mark.parametrize("deg", [10, 20, 40])
def test_brute_force_shadow_matches_tangent_ray(deg):
    t = math.radians(deg)
    lo, hi = shadow_interval(t, n_samples=20001)
    # limited by the b spacing of the scan (~6e-4 A)
    assert hi - lo == pytest.approx(exact_shadow_length(t), abs=1e-3)


def test_double_collision_sectors():
    left, right = double_collision_sectors(T20)
    f_left, f_right = sector_formulas(T20)
    # the closed forms hold to ~3e-5 rad against the traced impact arcs
    assert left == pytest.approx(f_left, abs=1e-4)
    assert right == pytest.approx(f_right, abs=1e-4)
    assert left < right
