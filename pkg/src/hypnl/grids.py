"""Periodic spatial lattices, fiber-valued fields, time-sampled trajectories,
and the weighted inner products on slices and strips.

A Grid is a 1D or 3D torus with a complex fiber at every site. Fields store
their values as a flat (sites, fiber) complex array; helpers reshape to the
tensor layout when a spatial stencil needs axis structure. All reductions run
in a fixed order (plain einsum / C-order sums) so results are bit-reproducible
across thread counts.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Periodic lattice: `points` sites per axis on a torus of size `extent`,
    with a complex fiber of dimension `fiber` at every site."""

    dim: int
    extent: float
    points: int
    fiber: int

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise GridError(f"dim must be 1 or 3, got {self.dim}")
        if self.points < 8:
            raise GridError(f"need at least 8 points per axis, got {self.points}")
        if self.extent <= 0:
            raise GridError(f"extent must be positive, got {self.extent}")
        if self.fiber < 1:
            raise GridError(f"fiber must be >= 1, got {self.fiber}")

    @property
    def spacing(self) -> float:
        return self.extent / self.points

    @property
    def sites(self) -> int:
        return self.points ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_coords(self) -> np.ndarray:
        """Coordinates along one axis (all axes are identical)."""
        return self.spacing * np.arange(self.points)

    def coords(self) -> np.ndarray:
        """Site coordinates, shape (sites, dim), C-order site enumeration."""
        x = self.axis_coords()
        if self.dim == 1:
            return x[:, None]
        xs = np.meshgrid(x, x, x, indexing="ij")
        return np.stack([a.ravel() for a in xs], axis=-1)

    def shaped(self, values: np.ndarray) -> np.ndarray:
        """View a flat (sites, fiber) array as (points, ..., points, fiber)."""
        return values.reshape((self.points,) * self.dim + (self.fiber,))

    def flat(self, values: np.ndarray) -> np.ndarray:
        return values.reshape(self.sites, self.fiber)

    def zeros(self) -> np.ndarray:
        return np.zeros((self.sites, self.fiber), dtype=complex)


def make_grid(dim: int, extent: float, points: int, fiber: int) -> Grid:
    """Build a periodic grid; rejects undersized or non-positive arguments."""
    return Grid(dim=dim, extent=float(extent), points=int(points), fiber=int(fiber))


@dataclass(frozen=True)
class StateField:
    """Fiber-valued complex field on a grid at one time label."""

    grid: Grid
    time: float
    values: np.ndarray  # (sites, fiber) complex

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.sites, self.grid.fiber):
            raise GridError(
                f"values shape {v.shape} != {(self.grid.sites, self.grid.fiber)}"
            )
        object.__setattr__(self, "values", v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values.view(float))))


def zero_field(grid: Grid, time: float = 0.0) -> StateField:
    return StateField(grid, time, grid.zeros())


@dataclass(frozen=True)
class Trajectory:
    """Uniformly time-sampled field history. Frame times are (index0 + i) * dt
    exactly (integer times step) so merged forward/backward solves share
    bit-identical time labels."""

    grid: Grid
    dt: float
    index0: int
    values: np.ndarray  # (frames, sites, fiber) complex

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3 or v.shape[1:] != (self.grid.sites, self.grid.fiber):
            raise GridError(f"trajectory values shape {v.shape} invalid")
        if v.shape[0] < 1:
            raise GridError("empty trajectory")
        if self.dt <= 0:
            raise GridError("dt must be positive")
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def t_start(self) -> float:
        return self.index0 * self.dt

    @property
    def t_end(self) -> float:
        return (self.index0 + self.n_frames - 1) * self.dt

    def times(self) -> np.ndarray:
        return (self.index0 + np.arange(self.n_frames)) * self.dt

    def time(self, i: int) -> float:
        return (self.index0 + i) * self.dt

    def index_of(self, t: float) -> int:
        """Frame index of the lattice time t (must lie on the lattice)."""
        i = round(t / self.dt) - self.index0
        if not (0 <= i < self.n_frames):
            raise GridError(f"time {t} outside trajectory [{self.t_start}, {self.t_end}]")
        if abs(self.time(i) - t) > 1e-9 * max(1.0, abs(t)):
            raise GridError(f"time {t} not on the frame lattice (dt={self.dt})")
        return i

    def frame(self, i: int) -> StateField:
        return StateField(self.grid, self.time(i), self.values[i])

    def __iter__(self):
        return (self.frame(i) for i in range(self.n_frames))

    def scaled(self, c: complex) -> "Trajectory":
        return Trajectory(self.grid, self.dt, self.index0, c * self.values)

    def plus(self, other: "Trajectory") -> "Trajectory":
        if other.index0 != self.index0 or other.n_frames != self.n_frames:
            raise GridError("trajectory lattices differ")
        return Trajectory(self.grid, self.dt, self.index0, self.values + other.values)


def trajectory_from_frames(frames: list[StateField], dt: float) -> Trajectory:
    grid = frames[0].grid
    index0 = round(frames[0].time / dt)
    vals = np.stack([f.values for f in frames])
    return Trajectory(grid, dt, index0, vals)


def sample_trajectory(grid: Grid, fn, dt: float, index0: int, n_frames: int) -> Trajectory:
    """Sample fn(t, x) -> (sites, fiber) values on a frame lattice."""
    x = grid.coords()
    vals = np.stack([np.asarray(fn((index0 + i) * dt, x), dtype=complex)
                     for i in range(n_frames)])
    return Trajectory(grid, dt, index0, vals)


@dataclass(frozen=True)
class InnerWeight:
    """Slice inner-product data: Hermitian positive-definite fiber matrix per
    site (the symbol in the time direction composed with the bundle metric)
    and the positive lapse per site."""

    grid: Grid
    weight: np.ndarray  # (sites, fiber, fiber) Hermitian > 0
    lapse: np.ndarray   # (sites,) real > 0

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=complex)
        lp = np.asarray(self.lapse, dtype=float)
        f = self.grid.fiber
        if w.shape != (self.grid.sites, f, f):
            raise GridError(f"weight shape {w.shape} invalid")
        if lp.shape != (self.grid.sites,):
            raise GridError(f"lapse shape {lp.shape} invalid")
        herm = np.max(np.abs(w - np.conj(np.swapaxes(w, 1, 2))))
        if herm > 1e-12 * max(1.0, np.max(np.abs(w))):
            raise GridError(f"weight not Hermitian (defect {herm:.2e})")
        if np.min(np.linalg.eigvalsh(w)) <= 0:
            raise GridError("weight not positive definite")
        if np.min(lp) <= 0:
            raise GridError("lapse not positive")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "lapse", lp)

    @classmethod
    def identity(cls, grid: Grid) -> "InnerWeight":
        w = np.broadcast_to(np.eye(grid.fiber, dtype=complex),
                            (grid.sites, grid.fiber, grid.fiber)).copy()
        return cls(grid, w, np.ones(grid.sites))

    @property
    def is_identity(self) -> bool:
        eye = np.eye(self.grid.fiber)
        return (np.array_equal(self.weight, np.broadcast_to(eye, self.weight.shape))
                and np.all(self.lapse == 1.0))


def _resolve_weight(w, t: float) -> InnerWeight:
    return w(t) if callable(w) else w


def inner_t(a: StateField, b: StateField, w: InnerWeight) -> complex:
    """Weighted slice inner product: sum over sites of conj(a).W.b * cell
    volume. Conjugate-linear in a, linear in b."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise GridError("fields live on different grids")
    if a.time != b.time:
        raise GridError(f"time labels differ: {a.time} vs {b.time}")
    if w.grid != a.grid:
        raise GridError("weight grid mismatch")
    if w.is_identity:
        s = np.einsum("sf,sf->", np.conj(a.values), b.values)
    else:
        s = np.einsum("sf,sfg,sg->", np.conj(a.values), w.weight, b.values)
    return complex(s) * a.grid.cell_volume


def norm_t(a: StateField, w: InnerWeight) -> float:
    v = inner_t(a, a, w).real
    return math.sqrt(max(v, 0.0))


def frame_norms_sq(tr: Trajectory, w) -> np.ndarray:
    """Per-frame squared slice norms, fixed summation order."""
    out = np.empty(tr.n_frames)
    for i in range(tr.n_frames):
        wt = _resolve_weight(w, tr.time(i))
        out[i] = inner_t(tr.frame(i), tr.frame(i), wt).real
    return out


def trapezoid_sum(series: np.ndarray, dt: float) -> float:
    """Composite trapezoidal rule with deterministic left-to-right summation."""
    if len(series) == 1:
        return 0.0
    acc = 0.5 * (series[0] + series[-1])
    for v in series[1:-1]:
        acc += v
    return float(acc * dt)


def norm_strip(tr: Trajectory, w) -> float:
    """Strip norm sqrt(int ||psi_t||_t^2 dt) by the trapezoidal rule.
    `w` is an InnerWeight or a callable t -> InnerWeight."""
    sq = frame_norms_sq(tr, w)
    return math.sqrt(max(trapezoid_sum(sq, tr.dt), 0.0))


def sup_norm(tr: Trajectory, w) -> float:
    """sup over frames of the slice norm."""
    return math.sqrt(max(float(np.max(frame_norms_sq(tr, w))), 0.0))


# ---------------------------------------------------------------------------
# spatial stencils (4th-order central; skew-symmetric on the periodic lattice)

_D4_COEF = ((1, 8.0), (2, -1.0))  # (offset, weight); antisymmetric pair


def diff4(grid: Grid, values: np.ndarray, axis: int) -> np.ndarray:
    """4th-order central derivative along a spatial axis. Exactly
    skew-symmetric w.r.t. the plain lattice inner product."""
    v = grid.shaped(values)
    out = np.zeros_like(v)
    for off, c in _D4_COEF:
        out += c * (np.roll(v, -off, axis=axis) - np.roll(v, off, axis=axis))
    return grid.flat(out / (12.0 * grid.spacing))


def diff_upwind(grid: Grid, values: np.ndarray, axis: int) -> np.ndarray:
    """First-order one-sided derivative; deliberately not skew-symmetric
    (documented failure mode for the integration-by-parts identity)."""
    v = grid.shaped(values)
    out = v - np.roll(v, 1, axis=axis)
    return grid.flat(out / grid.spacing)


def fourth_difference(grid: Grid, values: np.ndarray, axis: int) -> np.ndarray:
    """Undivided 4th difference, the dissipation stencil."""
    v = grid.shaped(values)
    out = (np.roll(v, -2, axis=axis) - 4.0 * np.roll(v, -1, axis=axis)
           + 6.0 * v - 4.0 * np.roll(v, 1, axis=axis) + np.roll(v, 2, axis=axis))
    return grid.flat(out)


def ko_dissipation(grid: Grid, values: np.ndarray, eps: float) -> np.ndarray:
    """Kreiss-Oliger term summed over axes: -eps/16 * D4 / dx per axis."""
    out = np.zeros_like(values)
    for ax in range(grid.dim):
        out -= fourth_difference(grid, values, ax)
    return (eps / (16.0 * grid.spacing)) * out


# ---------------------------------------------------------------------------
# export

def grid_descriptor(grid: Grid) -> dict:
    return {"dim": grid.dim, "extent": grid.extent, "points": grid.points,
            "fiber": grid.fiber, "spacing": grid.spacing}


def export_trajectory(tr: Trajectory, outdir: str, prefix: str = "frame") -> None:
    """One CSV per frame (site_index, re_0, im_0, ...) plus a manifest JSON."""
    os.makedirs(outdir, exist_ok=True)
    f = tr.grid.fiber
    header = "site_index," + ",".join(
        f"re_{k},im_{k}" for k in range(f))
    for i in range(tr.n_frames):
        rows = np.empty((tr.grid.sites, 1 + 2 * f))
        rows[:, 0] = np.arange(tr.grid.sites)
        rows[:, 1::2] = tr.values[i].real
        rows[:, 2::2] = tr.values[i].imag
        path = os.path.join(outdir, f"{prefix}_{i:05d}.csv")
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for r in rows:
                fh.write(f"{int(r[0])}," + ",".join(f"{v:.17g}" for v in r[1:]) + "\n")
    manifest = {"dt": tr.dt, "t_start": tr.t_start, "frames": tr.n_frames,
                "grid": grid_descriptor(tr.grid)}
    with open(os.path.join(outdir, f"{prefix}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
