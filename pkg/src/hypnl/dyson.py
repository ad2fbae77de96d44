"""Iterative series solution of (S - B) psi = phi: psi = sum_n psi^(n) with
psi^(0) the sourced local solve and S psi^(n+1) = B psi^(n) with zero data.

Two regimes:
  * retarded: kernel consumes only the past, iteration on [0, T];
  * short time range: kernel radius delta, two-sided solves on [-W, T+W].

Per-iterate norms are recorded against the closed-form theoretical bounds, a
ratio diagnostic drives the Converged / Stalled / Diverged verdict, and the
equation residual of the partial sum is tracked by centered time differencing.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import (StateField, Trajectory, frame_norms_sq, norm_strip,
                    sup_norm, trapezoid_sum)
from .kernels import TimeKernel, estimate_bound, weighted
from .solver import SolveAborted, SolveOptions, solve_local
from .systems import SystemSpec, apply_S, inner_weight
from .diagnostics import measure_D


class DysonError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# closed-form bounds

def bound_retarded(n: int, K_T: float, t: float, M_T: float) -> float:
    """M_T * K_T^n * t^(2n) / (2n)! — the retarded iterate majorant whose sum
    is M_T cosh(sqrt(K_T) t)."""
    if n < 0 or K_T < 0 or t < 0 or M_T < 0:
        raise DysonError("bound arguments must be nonnegative")
    return M_T * K_T ** n * t ** (2 * n) / math.factorial(2 * n)


def bound_short_log(n: int, C: float, delta: float, D: float, t: float,
                    M: float) -> float:
    """log of bound_short (for large-n ratio arithmetic); -inf at M=0 or C=0
    with n > 0."""
    if n == 0:
        return math.log(M) + D * abs(t) / 2.0 if M > 0 else -math.inf
    if M <= 0 or C <= 0:
        return -math.inf
    return (math.log(M) - math.lgamma(n + 1) + n * math.log(4.0 * C * delta)
            + D * abs(t) / 2.0 + n * math.log(abs(t) + 2.0 * n * delta))


def bound_short(n: int, C: float, delta: float, D: float, t: float,
                M: float) -> float:
    """(M/n!) (4 C delta)^n e^{D|t|/2} (|t| + 2 n delta)^n; its successive
    ratio tends to 8 e delta^2 C."""
    if n < 0 or C < 0 or delta <= 0 or D < 0 or M < 0:
        raise DysonError("bound arguments out of range")
    lg = bound_short_log(n, C, delta, D, t, M)
    if lg == -math.inf:
        return 0.0
    try:
        return math.exp(lg)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# residual of a candidate solution

def _aligned_source_values(phi: Optional[Trajectory], tr: Trajectory) -> np.ndarray:
    out = np.zeros_like(tr.values)
    if phi is None:
        return out
    if abs(phi.dt - tr.dt) > 1e-12 * tr.dt:
        raise DysonError("source lattice mismatch")
    off = phi.index0 - tr.index0
    lo = max(0, off)
    hi = min(tr.n_frames, off + phi.n_frames)
    if hi > lo:
        out[lo:hi] = phi.values[lo - off:hi - off]
    return out


def residual(sys: SystemSpec, k: Optional[TimeKernel], psi: Trajectory,
             phi: Optional[Trajectory],
             strip: Optional[tuple] = None) -> float:
    """Strip norm of (S - B) psi - phi over the inner strip, with d_t psi by
    centered frame differences (O(dt^2)); endpoint frames are excluded."""
    F = psi.n_frames
    if F < 3:
        raise DysonError("need at least 3 frames for the centered residual")
    dt = psi.dt
    b_all = k.apply_all(psi) if k is not None else np.zeros_like(psi.values)
    phi_vals = _aligned_source_values(phi, psi)
    w = inner_weight(sys)
    lo, hi = 1, F - 2
    if strip is not None:
        lo = max(lo, int(math.ceil(strip[0] / dt - 1e-9)) - psi.index0)
        hi = min(hi, int(math.floor(strip[1] / dt + 1e-9)) - psi.index0)
    if hi < lo:
        raise DysonError("empty residual strip (insufficient padding)")
    series = np.empty(hi - lo + 1)
    for i in range(lo, hi + 1):
        dpsi = (psi.values[i + 1] - psi.values[i - 1]) / (2.0 * dt)
        r = (apply_S(sys, psi.values[i], dpsi, psi.time(i))
             - b_all[i] - phi_vals[i])
        f = StateField(sys.grid, psi.time(i), r)
        series[i - lo] = (np.einsum("sf,sfg,sg->", np.conj(r), w.weight, r).real
                          * sys.grid.cell_volume)
        del f
    return math.sqrt(max(trapezoid_sum(series, dt), 0.0))


# ---------------------------------------------------------------------------
# result type

@dataclass
class DysonResult:
    partial_sum: Trajectory
    iterate_sup_norms: list
    iterate_strip_norms: list
    bound_values: list
    residual_history: list
    ratios: list
    verdict: str            # Converged | Stalled | Diverged
    n_used: int
    config: dict = field(default_factory=dict)

    def check_invariants(self, tol: float, tol_residual: float) -> None:
        if len(self.iterate_sup_norms) != self.n_used + 1:
            raise DysonError("iterate norm bookkeeping broken")
        if self.verdict == "Converged":
            if self.residual_history[-1] > tol_residual:
                raise DysonError("Converged verdict with residual above tol")
            if self.n_used >= 1 and self.iterate_strip_norms[-1] > tol:
                raise DysonError("Converged verdict with increment above tol")


def result_to_json(res: DysonResult) -> dict:
    return {
        "verdict": res.verdict,
        "n_used": res.n_used,
        "iterate_sup_norms": [float(v) for v in res.iterate_sup_norms],
        "iterate_strip_norms": [float(v) for v in res.iterate_strip_norms],
        "bound_values": [float(v) for v in res.bound_values],
        "residual_history": [float(v) for v in res.residual_history],
        "ratios": [float(v) for v in res.ratios],
        "config": res.config,
    }


def result_to_csv(res: DysonResult, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "sup_norm", "strip_norm", "bound", "residual", "ratio"])
        for n in range(res.n_used + 1):
            ratio = res.ratios[n - 1] if n >= 1 else float("nan")
            wr.writerow([n,
                         f"{res.iterate_sup_norms[n]:.17g}",
                         f"{res.iterate_strip_norms[n]:.17g}",
                         f"{res.bound_values[n]:.17g}",
                         f"{res.residual_history[n]:.17g}",
                         f"{ratio:.17g}"])


# ---------------------------------------------------------------------------
# iteration driver

def _two_sided_solve(sys: SystemSpec, src: Optional[Trajectory],
                     data: StateField, t_lo: float, t_hi: float,
                     opts: SolveOptions) -> Trajectory:
    """Solve from data at t=0 in both directions and merge on one lattice."""
    fwd = solve_local(sys, src, data, 0.0, t_hi, opts)
    if t_lo >= -1e-15:
        return fwd
    bwd = solve_local(sys, src, data, 0.0, t_lo, opts)
    vals = np.concatenate([bwd.values[:-1], fwd.values])
    return Trajectory(sys.grid, opts.dt, bwd.index0, vals)


def _norms(tr: Trajectory, w) -> tuple:
    sq = frame_norms_sq(tr, w)
    return (math.sqrt(max(float(np.max(sq)), 0.0)),
            math.sqrt(max(trapezoid_sum(sq, tr.dt), 0.0)))


def _window_contamination(src: Trajectory, n: int, delta: float, W: float,
                          T: float, n_max: int) -> bool:
    """True when boundary clipping at this iterate can reach the inner strip
    [0, T] within the remaining iteration budget. Clipping only happens where
    the applied source is live within delta of the window boundary; the
    resulting error then travels inward by at most delta per iterate, so with
    W >= n_max * delta it can never contaminate the strip."""
    if not math.isfinite(delta):
        return False
    if (n_max - n) * delta <= W - delta + 1e-9:
        return False
    amp = np.max(np.abs(src.values), axis=(1, 2))
    peak = float(np.max(amp))
    if peak == 0.0:
        return False
    times = src.times()
    mask = (times < -W + delta + 1e-9) | (times > T + W - delta - 1e-9)
    if not np.any(mask):
        return False
    return bool(np.max(amp[mask]) > 1e-10 * peak)


def _run_iteration(sys, k, phi, data, T, opts, tol, tol_residual, n_max,
                   short_range, W, n_min, monitor, constants):
    if short_range:
        t_lo, t_hi = -W, T + W
        lat = round((T + W) / opts.dt) * opts.dt  # ensure lattice alignment
        del lat
        solve = lambda src, d: _two_sided_solve(sys, src, d, t_lo, t_hi, opts)
    else:
        t_lo, t_hi = 0.0, T
        solve = lambda src, d: solve_local(sys, src, d, 0.0, T, opts)

    w = inner_weight(sys)
    psi = solve(phi, data)
    total = psi
    sup0, strip0 = _norms(psi, w)
    sup_norms, strip_norms = [sup0], [strip0]

    C = constants["C_est"]
    D = constants["D"]
    M = constants["M"]
    delta = k.delta if k is not None else math.inf
    if short_range:
        bound_fn = lambda n: bound_short(n, C, delta, D, T, M)
    else:
        K_T = C * math.exp(D * T / 2.0)
        constants["K_T"] = K_T
        bound_fn = lambda n: bound_retarded(n, K_T, T, M * math.exp(D * T / 2.0))
    bounds = [bound_fn(0)]
    residuals = [residual(sys, k, total, phi, strip=(0.0, T))]
    ratios = []
    verdict = None
    n_used = 0

    if monitor is not None:
        monitor(0, psi, None)

    plateau = 0
    blowup = 0
    for n in range(1, n_max + 1):
        if k is None:
            verdict = ("Converged"
                       if residuals[-1] <= tol_residual else "Stalled")
            break
        src_vals = k.apply_all(psi)
        src = Trajectory(sys.grid, psi.dt, psi.index0, src_vals)
        if short_range and _window_contamination(src, n, delta, W, T, n_max):
            raise DysonError(f"window exhausted at iterate {n}: support "
                             f"reaches the clipped boundary of [-{W}, {T + W}]")
        src_sup, src_strip = _norms(src, w)
        if src_sup == 0.0 and src_strip == 0.0:
            verdict = ("Converged"
                       if residuals[-1] <= tol_residual else "Stalled")
            break
        try:
            psi = solve(src, StateField(sys.grid, 0.0, sys.grid.zeros()))
        except SolveAborted:
            verdict = "Diverged"
            break
        total = total.plus(psi)
        sup_n, strip_n = _norms(psi, w)
        sup_norms.append(sup_n)
        strip_norms.append(strip_n)
        bounds.append(bound_fn(n))
        residuals.append(residual(sys, k, total, phi, strip=(0.0, T)))
        n_used = n
        if monitor is not None:
            monitor(n, psi, src)

        prev = strip_norms[-2]
        r = strip_n / prev if prev > 0 else math.inf
        ratios.append(r)
        if not math.isfinite(sup_n) or sup_n > 1e120:
            verdict = "Diverged"
            break
        plateau = plateau + 1 if 0.98 <= r <= 1.02 else 0
        blowup = blowup + 1 if r > 1.05 else 0
        if strip_n <= tol and residuals[-1] <= tol_residual:
            verdict = "Converged"
            break
        if n >= n_min:
            if blowup >= 5:
                verdict = "Diverged"
                break
            if plateau >= 5:
                verdict = "Stalled"
                break
    if verdict is None:
        verdict = "Stalled"

    cfg = dict(constants)
    cfg.update({"T": T, "delta": delta, "tol": tol,
                "tol_residual": tol_residual, "n_max": n_max,
                "short_range": short_range, "W": W if short_range else 0.0})
    res = DysonResult(partial_sum=total, iterate_sup_norms=sup_norms,
                      iterate_strip_norms=strip_norms, bound_values=bounds,
                      residual_history=residuals, ratios=ratios,
                      verdict=verdict, n_used=n_used, config=cfg)
    res.check_invariants(tol, tol_residual)
    return res


def _measure_constants(sys, k, phi, data, T, constants, window, seed):
    out = dict(constants or {})
    w = inner_weight(sys)
    if "D" not in out:
        out["D"] = measure_D(sys, window=(window[0], window[1]), probes=16,
                             seed=seed)
    if "C_est" not in out:
        out["C_est"] = estimate_bound(k, sys, probes=32, t_window=window,
                                      D=0.0, seed=seed).C_est
    if "M" not in out:
        m = math.sqrt(max(
            (np.einsum("sf,sfg,sg->", np.conj(data.values), w.weight,
                       data.values).real * sys.grid.cell_volume), 0.0))
        if phi is not None:
            # + int ||A0^{-1} phi||_t dt over the source window
            nv = np.einsum("sfg,tsg->tsf", sys.A0_inv, phi.values)
            sq = np.einsum("tsf,sfg,tsg->t", np.conj(nv), w.weight, nv).real \
                * sys.grid.cell_volume
            m += trapezoid_sum(np.sqrt(np.maximum(sq, 0.0)), phi.dt)
        out["M"] = m
    return out


def dyson_retarded(sys: SystemSpec, k: Optional[TimeKernel],
                   phi: Optional[Trajectory], data: StateField, T: float,
                   opts: SolveOptions, tol: float = 1e-8,
                   tol_residual: float = 1e-3, n_max: int = 40,
                   n_min: int = 0, constants: Optional[dict] = None,
                   allow_early_switch_on: bool = False, seed: int = 0,
                   monitor: Optional[Callable] = None) -> DysonResult:
    """Series solution on [0, T] for a retarded kernel switched on at t >= 0."""
    if opts.store_every != 1:
        raise DysonError("kernel consumption requires store_every = 1")
    if k is not None:
        if not k.retarded:
            raise DysonError("dyson_retarded needs a retarded kernel")
        if k.switch_on < -1e-12:
            cst = _measure_constants(sys, k, phi, data, T, constants,
                                     (k.switch_on, T), seed)
            t0 = abs(k.switch_on)
            margin = t0 * t0 * math.exp(cst["D"] * t0 / 2.0) * cst["C_est"]
            if not allow_early_switch_on or margin >= 1.0:
                raise DysonError(
                    f"switch-on before the data surface needs margin "
                    f"t0^2 e^(D t0/2) C = {margin:.3g} < 1 and the explicit flag")
    base = dict(constants or {})
    if k is None:
        base.setdefault("C_est", 0.0)
    cst = _measure_constants(sys, k, phi, data, T, base, (0.0, T), seed)
    return _run_iteration(sys, k, phi, data, T, opts, tol, tol_residual,
                          n_max, False, 0.0, n_min, monitor, cst)


def dyson_short_range(sys: SystemSpec, k: TimeKernel,
                      phi: Optional[Trajectory], data: StateField, T: float,
                      opts: SolveOptions, tol: float = 1e-8,
                      tol_residual: float = 1e-3, n_max: int = 40,
                      W: Optional[float] = None, n_min: int = 0,
                      constants: Optional[dict] = None, seed: int = 0,
                      monitor: Optional[Callable] = None) -> DysonResult:
    """Series solution with a finite-time-range kernel; iterates solve on the
    two-sided window [-W, T+W] with zero data at t=0 for n >= 1."""
    if opts.store_every != 1:
        raise DysonError("kernel consumption requires store_every = 1")
    if not math.isfinite(k.delta):
        raise DysonError("short-range iteration needs a finite kernel range")
    if W is None:
        W = n_max * k.delta
    # snap the window up to the frame lattice (never below the requested reach)
    W = math.ceil(W / opts.dt - 1e-9) * opts.dt
    if W < k.delta:
        raise DysonError("window W must cover at least one kernel range")
    cst = _measure_constants(sys, k, phi, data, T, constants, (-W, T + W), seed)
    return _run_iteration(sys, k, phi, data, T, opts, tol, tol_residual,
                          n_max, True, W, n_min, monitor, cst)


