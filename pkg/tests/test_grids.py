"""Lattice, trajectory, and stencil invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypnl.grids import (GridError, InnerWeight, StateField, Trajectory,
                         diff4, diff_upwind, fourth_difference, inner_t,
                         ko_dissipation, make_grid, norm_t, sample_trajectory,
                         trapezoid_sum, zero_field)


def _rand(grid, seed):
    rng = np.random.default_rng(np.random.Philox(seed))
    return (rng.standard_normal((grid.sites, grid.fiber))
            + 1j * rng.standard_normal((grid.sites, grid.fiber)))


# ---------------------------------------------------------------------------
# grids

def test_make_grid_validation():
    with pytest.raises(GridError):
        make_grid(2, 1.0, 8, 1)       # only 1D and 3D lattices
    with pytest.raises(GridError):
        make_grid(1, 1.0, 4, 1)       # too few points for the 5-point stencil
    with pytest.raises(GridError):
        make_grid(1, -1.0, 8, 1)


def test_coords_and_volume():
    g = make_grid(3, 2.0, 8, 3)
    assert g.sites == 512
    assert g.spacing == pytest.approx(0.25)
    assert g.cell_volume == pytest.approx(0.25 ** 3)
    c = g.coords()
    assert c.shape == (512, 3)
    assert c.min() == 0.0 and c.max() == pytest.approx(2.0 - 0.25)


def test_shaped_flat_roundtrip():
    g = make_grid(3, 1.0, 8, 2)
    v = _rand(g, 1)
    assert np.array_equal(g.flat(g.shaped(v)), v)


# ---------------------------------------------------------------------------
# trajectories

@given(st.integers(-2000, 2000), st.integers(0, 300),
       st.sampled_from([1e-3, 1.0 / 3.0, 0.125, 0.7]))
@settings(max_examples=60, deadline=None)
def test_trajectory_times_exact(index0, i, dt):
    """Frame times are (index0 + i) * dt computed directly, never accumulated,
    so refining by 2 keeps shared lattice points bitwise identical."""
    g = make_grid(1, 1.0, 8, 1)
    n = i + 1
    tr = Trajectory(g, dt, index0, np.zeros((n, g.sites, 1), complex))
    assert tr.time(i) == (index0 + i) * dt
    assert tr.index_of(tr.time(i)) == i


def test_sample_trajectory_and_frame():
    g = make_grid(1, 2.0 * math.pi, 16, 1)

    def fn(t, coords):
        return np.exp(1j * coords[:, :1]) * t

    tr = sample_trajectory(g, fn, 0.5, -2, 5)
    assert tr.t_start == -1.0 and tr.t_end == 1.0
    f = tr.frame(2)
    assert isinstance(f, StateField)
    assert f.time == 0.0
    assert np.all(f.values == 0.0)


def test_trajectory_algebra():
    g = make_grid(1, 1.0, 8, 1)
    vals = np.arange(2 * 8, dtype=float).reshape(2, 8, 1).astype(complex)
    tr = Trajectory(g, 0.1, 0, vals)
    two = tr.plus(tr)
    assert np.array_equal(two.values, tr.scaled(2.0).values)


# ---------------------------------------------------------------------------
# inner products and strip norms

def test_inner_weight_rejects_indefinite():
    g = make_grid(1, 1.0, 8, 2)
    w = np.tile(np.diag([1.0, -1.0])[None], (g.sites, 1, 1)).astype(complex)
    with pytest.raises(GridError):
        InnerWeight(grid=g, weight=w, lapse=np.ones(g.sites))


def test_inner_t_weighted():
    g = make_grid(1, 2.0, 8, 2)
    w = np.tile(np.diag([2.0, 3.0])[None], (g.sites, 1, 1)).astype(complex)
    iw = InnerWeight(grid=g, weight=w, lapse=np.ones(g.sites))
    a = StateField(g, 0.0, np.ones((g.sites, 2), complex))
    # <a, a> = sum_s (2 + 3) * dv
    assert inner_t(a, a, iw).real == pytest.approx(5.0 * 2.0)
    assert norm_t(a, iw) == pytest.approx(math.sqrt(10.0))


def test_trapezoid_sum_matches_reference():
    rng = np.random.default_rng(np.random.Philox(7))
    s = rng.standard_normal(33)
    assert trapezoid_sum(s, 0.01) == pytest.approx(np.trapezoid(s, dx=0.01))
    assert trapezoid_sum(s[:1], 0.01) == 0.0


# ---------------------------------------------------------------------------
# stencils

def test_diff4_is_circulant_symbol():
    """On e^{ikx} the 4th-order stencil acts as multiplication by the exact
    modified wavenumber i*(8 sin(kh) - sin(2kh))/(6h)."""
    g = make_grid(1, 2.0 * math.pi, 32, 1)
    h = g.spacing
    for k in (1, 3, 7):
        v = np.exp(1j * k * g.coords()[:, :1])
        kt = (8.0 * math.sin(k * h) - math.sin(2.0 * k * h)) / (6.0 * h)
        np.testing.assert_allclose(diff4(g, v, 0), 1j * kt * v,
                                   rtol=0, atol=1e-13)


def test_diff4_fourth_order():
    errs = []
    for pts in (32, 64, 128):
        g = make_grid(1, 2.0 * math.pi, pts, 1)
        x = g.coords()[:, :1]
        v = np.exp(np.sin(x)).astype(complex)
        exact = np.cos(x) * v
        errs.append(float(np.max(np.abs(diff4(g, v, 0) - exact))))
    order = math.log(errs[0] / errs[2]) / math.log(4.0)
    assert 3.7 <= order <= 4.3


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_diff4_exactly_skew_symmetric(seed):
    """<a, D b> + <D a, b> vanishes to the last bit on the periodic lattice:
    discrete integration by parts with no boundary term."""
    g = make_grid(1, 1.0, 16, 2)
    a, b = _rand(g, seed), _rand(g, seed + 1)
    lhs = np.vdot(a, diff4(g, b, 0)) + np.vdot(diff4(g, a, 0), b)
    scale = float(np.max(np.abs(a)) * np.max(np.abs(b)) * g.sites / g.spacing)
    assert abs(lhs) <= 1e-13 * scale


def test_diff_upwind_not_skew_symmetric():
    """The one-sided stencil breaks the integration-by-parts identity — this
    is the documented reason the solver uses the central stencil."""
    g = make_grid(1, 1.0, 16, 1)
    a, b = _rand(g, 5), _rand(g, 6)
    lhs = np.vdot(a, diff_upwind(g, b, 0)) + np.vdot(diff_upwind(g, a, 0), b)
    assert abs(lhs) > 1.0


def test_diff_upwind_first_order():
    errs = []
    for pts in (64, 128):
        g = make_grid(1, 2.0 * math.pi, pts, 1)
        x = g.coords()[:, :1]
        v = np.sin(x).astype(complex)
        errs.append(float(np.max(np.abs(diff_upwind(g, v, 0) - np.cos(x)))))
    order = math.log(errs[0] / errs[1]) / math.log(2.0)
    assert 0.8 <= order <= 1.2


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_ko_dissipation_is_dissipative(seed):
    """Re<v, ko(v)> <= 0: the Kreiss-Oliger term never feeds energy in."""
    g = make_grid(1, 1.0, 16, 1)
    v = _rand(g, seed)
    assert np.vdot(v, ko_dissipation(g, v, 0.5)).real <= 1e-12


def test_fourth_difference_annihilates_cubics():
    g = make_grid(1, 1.0, 16, 1)
    x = g.coords()[:, :1]
    # undivided 4th difference is exact-zero on polynomials of degree <= 3,
    # but the periodic wrap contaminates sites near the seam; check the bulk
    v = (x ** 3 - 0.2 * x ** 2).astype(complex)
    out = fourth_difference(g, v, 0)
    assert np.max(np.abs(out[3:-3])) <= 1e-12


def test_zero_field():
    g = make_grid(1, 1.0, 8, 2)
    f = zero_field(g, 1.5)
    assert f.time == 1.5 and not np.any(f.values) and f.is_finite()
