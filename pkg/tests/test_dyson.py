"""Iterative series solver: majorant arithmetic, convergence against an
independent stiff ODE oracle, and the result bookkeeping."""

import json
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import gaussian_pulse
from hypnl.grids import StateField, make_grid, norm_strip, sample_trajectory
from hypnl.systems import inner_weight, ode_system, transport_system
from hypnl.solver import SolveOptions, solve_local
from hypnl.kernels import make_convolution
from hypnl.dyson import (DysonError, bound_retarded, bound_short,
                         bound_short_log, dyson_retarded, dyson_short_range,
                         residual, result_to_csv, result_to_json)


# ---------------------------------------------------------------------------
# majorant arithmetic

def test_bound_retarded_sums_to_cosh():
    for K, t, M in [(1.0, 1.0, 1.0), (3.7, 2.0, 0.5), (0.2, 4.0, 2.0)]:
        total = sum(bound_retarded(n, K, t, M) for n in range(21))
        assert total == pytest.approx(M * math.cosh(math.sqrt(K) * t),
                                      rel=1e-12)


@pytest.mark.parametrize("C,delta", [(1.0, 0.1), (0.5, 0.3), (7.0, 0.02)])
def test_bound_short_ratio_limit(C, delta):
    """Successive bound ratios approach 8 e delta^2 C; within 1% at n=200."""
    n = 200
    t = 1.0
    lr = (bound_short_log(n + 1, C, delta, 0.0, t, 1.0)
          - bound_short_log(n, C, delta, 0.0, t, 1.0))
    assert math.exp(lr) == pytest.approx(8.0 * math.e * delta ** 2 * C,
                                         rel=0.01)


def test_bound_short_log_consistent():
    for n in (0, 1, 5, 40):
        b = bound_short(n, 2.0, 0.25, 1.0, 1.5, 0.7)
        lb = bound_short_log(n, 2.0, 0.25, 1.0, 1.5, 0.7)
        assert math.log(b) == pytest.approx(lb, rel=1e-12)


def test_bound_argument_validation():
    with pytest.raises(DysonError):
        bound_retarded(-1, 1.0, 1.0, 1.0)
    with pytest.raises(DysonError):
        bound_short(1, 1.0, 0.0, 0.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# retarded iteration

def _memory_setup(delta_eff=math.inf):
    """Scalar ODE with an exponential memory: d_t psi = -psi/2 + int_0^t
    e^{-(t-tau)} psi dtau + phi."""
    grid = make_grid(1, 1.0, 8, 1)
    sys = ode_system(grid, np.array([[-0.5]]))
    k = make_convolution(lambda u: math.exp(-u), None, grid, t0=0.0,
                         delta_eff=delta_eff)
    return grid, sys, k


def test_retarded_iteration_dominated_by_majorant():
    grid, sys, k = _memory_setup()
    opts = SolveOptions(dt=1.0 / 256.0)
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    res = dyson_retarded(sys, k, None, data, 2.0, opts, tol=1e-8,
                         tol_residual=1e-3, n_max=30)
    assert res.verdict == "Converged"
    assert res.residual_history[-1] <= 1e-3
    for n, (nrm, bnd) in enumerate(zip(res.iterate_sup_norms,
                                       res.bound_values)):
        assert nrm <= 1.1 * bnd, f"iterate {n}: {nrm} > 1.1 * {bnd}"


def test_retarded_iteration_matches_stiff_oracle():
    """Augment the memory integral as an auxiliary ODE variable and integrate
    the coupled system with an unrelated high-order adaptive scheme."""
    grid, sys, k = _memory_setup()
    opts = SolveOptions(dt=1.0 / 256.0)
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    T = 2.0
    res = dyson_retarded(sys, k, None, data, T, opts, tol=1e-10,
                         tol_residual=1e-3, n_max=40)

    def rhs(t, y):
        psi, m = y
        return [-0.5 * psi + m, psi - m]

    sol = solve_ivp(rhs, (0.0, T), [1.0, 0.0], method="DOP853",
                    rtol=1e-12, atol=1e-12, dense_output=True)
    times = res.partial_sum.times()
    mine = res.partial_sum.values[:, 0, 0].real
    ref = sol.sol(times)[0]
    assert np.max(np.abs(mine - ref)) <= 1e-6


def test_short_range_window_validation():
    grid, sys, _ = _memory_setup()
    k = make_convolution(lambda u: 1.0, None, grid, t0=0.0, delta_eff=0.5)
    # the convolution kernel is retarded-only; short-range entry still demands
    # a window at least delta wide
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    with pytest.raises(DysonError):
        dyson_short_range(sys, k, None, data, 1.0,
                          SolveOptions(dt=1.0 / 64.0), W=0.1)


def test_store_every_rejected():
    grid, sys, k = _memory_setup()
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    with pytest.raises(DysonError):
        dyson_retarded(sys, k, None, data, 1.0,
                       SolveOptions(dt=1.0 / 64.0, store_every=2))


# ---------------------------------------------------------------------------
# residual

def test_residual_second_order_on_exact_solution():
    grid = make_grid(1, 2.0 * math.pi, 256, 1)
    sys = transport_system(grid)
    w = inner_weight(sys)

    def exact(dt):
        n = round(1.0 / dt) + 1
        return sample_trajectory(
            grid, lambda t, c: gaussian_pulse(grid, t), dt, 0, n)

    r1 = residual(sys, None, exact(0.02), None)
    r2 = residual(sys, None, exact(0.01), None)
    # the centered time difference floors the residual at O(dt^2)
    order = math.log(r1 / r2) / math.log(2.0)
    assert 1.8 <= order <= 2.3
    del w


def test_residual_detects_wrong_solution():
    grid = make_grid(1, 2.0 * math.pi, 128, 1)
    sys = transport_system(grid)
    n = 65
    wrong = sample_trajectory(
        grid, lambda t, c: gaussian_pulse(grid, -t), 0.01, 0, n)
    right = sample_trajectory(
        grid, lambda t, c: gaussian_pulse(grid, t), 0.01, 0, n)
    assert residual(sys, None, wrong, None) > 100.0 * residual(
        sys, None, right, None)


# ---------------------------------------------------------------------------
# result bookkeeping

def test_result_serialization(tmp_path):
    grid, sys, k = _memory_setup()
    opts = SolveOptions(dt=1.0 / 128.0)
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    res = dyson_retarded(sys, k, None, data, 1.0, opts, n_max=20)

    doc = result_to_json(res)
    json.dumps(doc)   # must be serializable as-is
    assert doc["verdict"] == res.verdict
    assert doc["n_used"] == res.n_used
    assert len(doc["iterate_sup_norms"]) == len(res.iterate_sup_norms)

    p = tmp_path / "dyson.csv"
    result_to_csv(res, str(p))
    lines = p.read_text().strip().splitlines()
    assert lines[0].startswith("n,")
    assert len(lines) == 1 + len(res.iterate_sup_norms)


def test_monitor_sees_every_iterate():
    grid, sys, k = _memory_setup()
    opts = SolveOptions(dt=1.0 / 128.0)
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    seen = []
    res = dyson_retarded(sys, k, None, data, 1.0, opts, n_max=20,
                         monitor=lambda n, tr, src: seen.append(n))
    assert seen == list(range(res.n_used + 1))


def test_deterministic_partial_sum():
    grid, sys, k = _memory_setup()
    opts = SolveOptions(dt=1.0 / 128.0)
    data = StateField(grid, 0.0, np.ones((grid.sites, 1), complex))
    a = dyson_retarded(sys, k, None, data, 1.0, opts, n_max=20)
    b = dyson_retarded(sys, k, None, data, 1.0, opts, n_max=20)
    assert np.array_equal(a.partial_sum.values, b.partial_sum.values)
