"""Coefficient validation, adjoint identities, and JSON round-trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypnl.grids import StateField, make_grid
from hypnl.systems import (SystemError, adjoint_defect, inner_weight,
                           make_system, ode_system, symbol_divergence,
                           system_from_json, system_to_json, transport_system,
                           validate_system, zero_order_matrices)

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], complex)


def _rand_field(grid, seed):
    rng = np.random.default_rng(np.random.Philox(seed))
    v = (rng.standard_normal((grid.sites, grid.fiber))
         + 1j * rng.standard_normal((grid.sites, grid.fiber)))
    return StateField(grid, 0.0, v)


def test_transport_validates():
    g = make_grid(1, 2.0 * math.pi, 64, 1)
    rep = validate_system(transport_system(g))
    assert rep.symmetric and rep.hyperbolic and rep.ok
    assert rep.adjoint_defect <= 1e-12
    assert all(me > 0 for _, me in rep.min_eig_samples)


def test_superluminal_coefficient_fails_hyperbolicity():
    """A0 + alpha A1 loses positivity once |A1| eigenvalues exceed 1/|alpha|;
    speed 2 transport is caught by the sampled-direction check."""
    g = make_grid(1, 2.0 * math.pi, 64, 1)
    rep = validate_system(transport_system(g, speed=2.0))
    assert rep.symmetric and not rep.hyperbolic and not rep.ok


def test_nonhermitian_coefficient_fails_symmetry():
    g = make_grid(1, 1.0, 8, 2)
    bad = np.array([[0.0, 1.0], [0.0, 0.0]], complex)
    rep = validate_system(make_system(g, np.eye(2), [bad]))
    assert not rep.symmetric


def test_v_max_tracks_speed():
    g = make_grid(1, 1.0, 16, 1)
    assert transport_system(g, speed=0.5).v_max == pytest.approx(0.5)
    assert transport_system(g).v_max == pytest.approx(1.0)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_adjoint_identity_exact_dirac_coefficients(seed):
    """<S a, b> = <a, S^dagger b> holds to round-off for the constant
    Hermitian coefficients with the skew-symmetric central stencil."""
    g = make_grid(1, 2.0 * math.pi, 32, 2)
    sys = make_system(g, np.eye(2), [-SIGMA1], S0=-0.5j * SIGMA3)
    d = adjoint_defect(sys, _rand_field(g, seed), _rand_field(g, seed + 1), 0.0)
    assert d <= 1e-11


def test_adjoint_identity_fails_upwind():
    g = make_grid(1, 2.0 * math.pi, 32, 1)
    sys = transport_system(g)
    a, b = _rand_field(g, 3), _rand_field(g, 4)
    assert adjoint_defect(sys, a, b, 0.0, stencil="upwind") > 1e-2
    assert adjoint_defect(sys, a, b, 0.0) <= 1e-12


def test_symbol_divergence_zero_for_constant_coefficients():
    g = make_grid(1, 1.0, 16, 2)
    sys = make_system(g, np.eye(2), [SIGMA1])
    assert not np.any(symbol_divergence(sys, 0.0))


def test_zero_order_matrices_diag():
    """S0 = diag(1, 0) gives the zero-order operator -(S0 + S0^dagger) with
    uniform bound 2 (identity A0 and unit lapse)."""
    g = make_grid(1, 1.0, 8, 2)
    sys = ode_system(g, np.diag([1.0, 0.0]))
    z = zero_order_matrices(sys, 0.0)
    np.testing.assert_allclose(
        z, np.broadcast_to(np.diag([-2.0, 0.0]), z.shape), atol=1e-14)


def test_inner_weight_is_beta_A0():
    g = make_grid(1, 1.0, 8, 2)
    A0 = np.diag([2.0, 1.0])
    sys = make_system(g, A0, [np.zeros((2, 2))], beta=3.0 * np.ones(g.sites))
    w = inner_weight(sys)
    np.testing.assert_allclose(
        w.weight, np.broadcast_to(3.0 * A0, w.weight.shape), atol=1e-14)


def test_indefinite_A0_rejected():
    g = make_grid(1, 1.0, 8, 2)
    with pytest.raises(SystemError):
        make_system(g, np.diag([1.0, -1.0]), [np.zeros((2, 2))])


def test_json_roundtrip_constant():
    g = make_grid(1, 2.0 * math.pi, 64, 2)
    sys = make_system(g, np.diag([2.0, 1.0]), [SIGMA1], S0=0.3j * SIGMA3,
                      name="probe")
    doc = system_to_json(sys)
    back = system_from_json(doc)
    assert back.name == "probe"
    assert back.grid == g
    np.testing.assert_array_equal(back.A0, sys.A0)
    np.testing.assert_array_equal(back.Aj[0], sys.Aj[0])
    np.testing.assert_array_equal(back.S0, sys.S0)


def test_json_varying_coefficient_needs_profile():
    g = make_grid(1, 1.0, 8, 1)
    a = np.ones((g.sites, 1, 1), complex)
    a[0, 0, 0] = 2.0
    sys = make_system(g, np.ones((1, 1)), [a])
    with pytest.raises(SystemError):
        system_to_json(sys)
