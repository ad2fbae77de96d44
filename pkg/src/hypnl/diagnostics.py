"""Verification instruments: discrete energy-identity residuals, exponential
growth bounds, exact measurement of the zero-order operator norm, and
propagation-cone checks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grids import Grid, Trajectory, frame_norms_sq
from .systems import SystemSpec, inner_weight, zero_order_matrices


class DiagnosticsError(ValueError):
    pass


@dataclass
class DiagReport:
    name: str
    values: np.ndarray          # per-frame series
    times: np.ndarray
    tolerance: float
    refinement: Optional[tuple] = None   # (coarse, fine, order)

    @property
    def summary_max(self) -> float:
        return float(np.max(self.values)) if len(self.values) else 0.0

    @property
    def summary_mean(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else 0.0

    @property
    def passed(self) -> bool:
        return self.summary_max <= self.tolerance

    def to_json(self) -> dict:
        doc = {"name": self.name, "max": self.summary_max,
               "mean": self.summary_mean, "tolerance": self.tolerance,
               "pass": bool(self.passed)}
        if self.refinement is not None:
            doc["refinement"] = {"coarse": self.refinement[0],
                                 "fine": self.refinement[1],
                                 "order": self.refinement[2]}
        return doc

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                wr.writerow([f"{t:.17g}", f"{v:.17g}"])


def order_estimate(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    """Observed convergence order from errors at two resolutions."""
    if err_fine <= 0 or err_coarse <= 0:
        return math.inf
    return math.log(err_coarse / err_fine) / math.log(ratio)


# ---------------------------------------------------------------------------

def energy_identity(sys: SystemSpec, tr: Trajectory,
                    source_used: Optional[Trajectory],
                    tolerance: float = math.inf) -> DiagReport:
    """Per-frame residual of the discrete balance law

        d/dt ||psi_t||^2 = 2 Re <phi | psi>_beta + <(S0 + S0^+ + div A) psi | psi>_beta,

    with d/dt by centered frame differences. For source-free skew-adjoint
    systems this is the norm-conservation drift."""
    F = tr.n_frames
    if F < 3:
        raise DiagnosticsError("need at least 3 frames")
    w = inner_weight(sys)
    nsq = frame_norms_sq(tr, w)
    dv = sys.grid.cell_volume
    beta = sys.beta

    phi_vals = None
    if source_used is not None:
        if abs(source_used.dt - tr.dt) > 1e-12 * tr.dt:
            raise DiagnosticsError("source lattice mismatch")
        phi_vals = np.zeros_like(tr.values)
        off = source_used.index0 - tr.index0
        lo, hi = max(0, off), min(F, off + source_used.n_frames)
        if hi > lo:
            phi_vals[lo:hi] = source_used.values[lo - off:hi - off]

    vals = np.empty(F - 2)
    for i in range(1, F - 1):
        t = tr.time(i)
        psi = tr.values[i]
        dnsq = (nsq[i + 1] - nsq[i - 1]) / (2.0 * tr.dt)
        rhs = 0.0
        if phi_vals is not None:
            rhs += 2.0 * (np.einsum("s,sf,sf->", beta, np.conj(phi_vals[i]),
                                    psi).real * dv)
        zmat = _sym_part_matrices(sys, t)
        if zmat is not None:
            rhs += (np.einsum("s,sf,sfg,sg->", beta, np.conj(psi), zmat,
                              psi).real * dv)
        vals[i - 1] = abs(dnsq - rhs)
    return DiagReport(name="energy_identity", values=vals,
                      times=tr.times()[1:-1], tolerance=tolerance)


def _sym_part_matrices(sys: SystemSpec, t: float) -> Optional[np.ndarray]:
    """(S0 + S0^dagger + div A) per site, or None when zero."""
    from .systems import symbol_divergence
    s0 = sys.S0_at(t)
    acc = symbol_divergence(sys, t)
    if s0 is not None:
        acc = acc + s0 + np.conj(np.swapaxes(s0, 1, 2))
    if not np.any(acc):
        return None
    return acc


def exponential_bound(sys: SystemSpec, tr: Trajectory, D: float, M: float,
                      t0: float = 0.0, slack: float = 1.05) -> DiagReport:
    """||psi_t|| e^{-D|t-t0|/2} / M per frame, passing when below `slack`."""
    if M <= 0:
        raise DiagnosticsError("need a positive data norm M")
    w = inner_weight(sys)
    nrm = np.sqrt(np.maximum(frame_norms_sq(tr, w), 0.0))
    times = tr.times()
    vals = nrm * np.exp(-D * np.abs(times - t0) / 2.0) / M
    return DiagReport(name="exponential_bound", values=vals, times=times,
                      tolerance=slack)


def measure_D(sys: SystemSpec, window: tuple = (0.0, 0.0), probes: int = 16,
              seed: int = 0) -> float:
    """Uniform bound of the zero-order operator over the time window. The
    operator is a per-site multiplication, so its slice-norm is the max over
    sites of the weight-conjugated matrix spectral norm — computed exactly;
    `probes` only sets the time sampling density for time-dependent S0."""
    if probes < 16:
        raise DiagnosticsError("need at least 16 probes")
    if sys.constant_in_time:
        times = [0.0]
    else:
        times = np.linspace(window[0], window[1], probes)
    w = inner_weight(sys).weight
    evals, vecs = np.linalg.eigh(w)
    root = np.einsum("sfg,sg,shg->sfh", vecs, np.sqrt(evals), np.conj(vecs))
    iroot = np.einsum("sfg,sg,shg->sfh", vecs, 1.0 / np.sqrt(evals),
                      np.conj(vecs))
    best = 0.0
    for t in times:
        z = zero_order_matrices(sys, float(t))
        conj = root @ z @ iroot
        s = np.linalg.svd(conj, compute_uv=False)
        best = max(best, float(np.max(s)))
    del seed
    return best


def _torus_distance(grid: Grid, mask: np.ndarray) -> np.ndarray:
    """Per-site Euclidean torus distance to the masked support set."""
    if not np.any(mask):
        return np.full(grid.sites, math.inf)
    x = grid.coords()
    supp = x[mask]
    L = grid.extent
    dist_sq = np.zeros((grid.sites, supp.shape[0]))
    for ax in range(grid.dim):
        d = np.abs(x[:, ax][:, None] - supp[None, :, ax])
        d = np.minimum(d, L - d)
        dist_sq += d * d
    return np.sqrt(np.min(dist_sq, axis=1))


def cone_violation(tr: Trajectory, data_support_mask: np.ndarray,
                   v_max: float, floor: float = 1e-7) -> DiagReport:
    """Max relative amplitude outside the v_max-cone of the data support
    (with a 2 dx stencil halo), per frame, against `floor`."""
    grid = tr.grid
    mask = np.asarray(data_support_mask, dtype=bool)
    if mask.shape != (grid.sites,):
        raise DiagnosticsError("support mask shape mismatch")
    dist = _torus_distance(grid, mask)
    amp = np.max(np.abs(tr.values), axis=2)          # (frames, sites)
    peak = float(np.max(amp))
    times = np.abs(tr.times())
    vals = np.zeros(tr.n_frames)
    if peak > 0:
        for i in range(tr.n_frames):
            outside = dist > v_max * times[i] + 2.0 * grid.spacing
            if np.any(outside):
                vals[i] = float(np.max(amp[i][outside])) / peak
    return DiagReport(name="cone_violation", values=vals, times=tr.times(),
                      tolerance=floor)


def support_mask(values: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Grid support: amplitude above rel * peak."""
    amp = np.max(np.abs(values), axis=-1)
    peak = float(np.max(amp))
    if peak == 0.0:
        return np.zeros(amp.shape, dtype=bool)
    return amp > rel * peak
