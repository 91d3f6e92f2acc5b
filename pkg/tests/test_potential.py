import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from heco.constants import HE4, PhysicalConstants
from heco.errors import DomainError, SingularInputError
from heco.potential import (
    DEFAULT_SIGMA, ON_AXIS_WELL_DEPTH, InteractionModel, MorseParams, Variant,
    calibrate_sigma, eval_gradient, eval_potential, jump_length, morse_bound_states,
    morse_potential, morse_turning_points, on_axis_well_depth,
)

FULL = InteractionModel(Variant.FULL)
REP = InteractionModel(Variant.REPULSIVE_ADSORBATE)
FLAT = InteractionModel(Variant.FLAT_SURFACE_ONLY)

coords = st.tuples(st.floats(-15, 15), st.floats(-1.0, 15.0)).filter(
    lambda p: p[0] ** 2 + p[1] ** 2 > 2.5 ** 2)


def fd_morse_levels(params: MorseParams, n=3000, z_lo=-1.5, z_hi=160.0):
    """Finite-difference eigenvalues of -(hbar^2/2m) d2/dz2 + V_Morse, hard walls."""
    z = np.linspace(z_lo, z_hi, n)
    h = z[1] - z[0]
    c = HE4.hbar2_over_2m / h ** 2
    diag = 2 * c + morse_potential(params, z)
    off = -c * np.ones(n - 1)
    w = linalg.eigh_tridiagonal(diag, off, select="v", select_range=(-params.D, 0.0),
                                eigvals_only=True)
    return np.sort(w)


def test_morse_bound_states_match_finite_difference_oracle():
    states = morse_bound_states(MorseParams())
    fd = fd_morse_levels(MorseParams())
    assert states.count == 3
    assert np.allclose(states.energies[:2], fd[:2], atol=0.02)
    # the third level sits just below threshold; the box resolves it only roughly
    assert -0.01 < states.energies[2] < 0


def test_morse_levels_derived_values():
    e = morse_bound_states(MorseParams()).energies
    assert e == pytest.approx((-2.53330, -0.60047, -0.00175), abs=5e-5)


def test_second_constant_route_agrees():
    assert PhysicalConstants.from_first_principles().hbar2_over_2m == pytest.approx(
        HE4.hbar2_over_2m, rel=2e-3)


def test_on_axis_calibration_reproduces_default_sigma():
    assert calibrate_sigma(ON_AXIS_WELL_DEPTH) == pytest.approx(DEFAULT_SIGMA, abs=1e-5)
    assert on_axis_well_depth(FULL) == pytest.approx(ON_AXIS_WELL_DEPTH, abs=1e-6)


def test_far_field_reduces_to_morse():
    z = np.linspace(0.5, 8, 20)
    assert np.allclose(eval_potential(FULL, 200.0, z), morse_potential(MorseParams(), z),
                       atol=1e-8)
    assert np.allclose(eval_potential(FLAT, 3.0, z), morse_potential(MorseParams(), z))


def test_singular_origin_and_hardwall_rejected():
    with pytest.raises(SingularInputError):
        eval_potential(FULL, 0.0, 0.0)
    with pytest.raises(DomainError):
        eval_potential(InteractionModel(Variant.HARD_WALL), 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(coords)
def test_gradient_matches_central_difference(p):
    x, z = p
    h = 1e-5
    for model in (FULL, REP, FLAT):
        gx, gz = eval_gradient(model, x, z)
        fx = (eval_potential(model, x + h, z) - eval_potential(model, x - h, z)) / (2 * h)
        fz = (eval_potential(model, x, z + h) - eval_potential(model, x, z - h)) / (2 * h)
        scale = 1 + abs(gx) + abs(gz)
        assert abs(gx - fx) < 1e-5 * scale
        assert abs(gz - fz) < 1e-5 * scale


@settings(max_examples=200, deadline=None)
@given(coords)
def test_mirror_symmetry_and_repulsive_upper_bound(p):
    x, z = p
    for model in (FULL, REP, FLAT):
        assert eval_potential(model, x, z) == eval_potential(model, -x, z)
    assert eval_potential(REP, x, z) >= eval_potential(FULL, x, z)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3.99, -1e-3))
def test_turning_points_lie_on_the_level(E_z):
    params = MorseParams()
    lo, hi = morse_turning_points(params, E_z)
    assert lo < params.z_m < hi
    assert morse_potential(params, lo) == pytest.approx(E_z, abs=1e-9)
    assert morse_potential(params, hi) == pytest.approx(E_z, abs=1e-9)


def test_jump_length_values_and_domain():
    p = MorseParams()
    e = morse_bound_states(p).energies
    assert jump_length(p, 10.0, e[0]) == pytest.approx(12.368, abs=1e-3)
    assert jump_length(p, 10.0, e[1]) == pytest.approx(23.362, abs=1e-3)
    with pytest.raises(DomainError):
        jump_length(p, 10.0, 0.0)
    with pytest.raises(DomainError):
        morse_turning_points(p, 0.5)
