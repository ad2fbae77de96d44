"""Specification and validation of first-order symmetric hyperbolic systems,
their normalized evolution form, adjoint structure, and the zero-order
operator Z controlling energy growth.

Operator convention (flat product spacetime, coordinates (t, x^j)):

    S psi = A0 d_t psi + sum_j A^j D_j psi - S0 psi,

with A0, A^j Hermitian per site, A0 positive definite, and D_j the module's
4th-order central stencil. The slice inner product uses the weight beta * A0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grids import (Grid, InnerWeight, StateField, diff4, diff_upwind,
                    GridError)


class SystemError(ValueError):
    pass


def _per_site(grid: Grid, mat) -> np.ndarray:
    """Broadcast a constant fiber matrix (or accept a per-site stack)."""
    m = np.asarray(mat, dtype=complex)
    f = grid.fiber
    if m.shape == (f, f):
        return np.broadcast_to(m, (grid.sites, f, f)).copy()
    if m.shape == (grid.sites, f, f):
        return m.copy()
    raise SystemError(f"coefficient shape {m.shape} invalid for fiber {f}")


def _hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, 1, 2)))))


@dataclass(frozen=True)
class SystemSpec:
    """Coefficient data of a symmetric hyperbolic system on a periodic grid.

    S0 may be time dependent through `S0_t(t) -> (sites, f, f)`; A0 time
    dependence enters only through `dA0_dt` (the d_t A0 term of the symbol
    divergence). Coefficient callbacks must be pure.
    """

    grid: Grid
    A0: np.ndarray                    # (sites, f, f) Hermitian > 0
    Aj: tuple                         # dim arrays, (sites, f, f) Hermitian
    S0: Optional[np.ndarray] = None   # (sites, f, f) or None
    S0_t: Optional[Callable[[float], np.ndarray]] = None
    beta: Optional[np.ndarray] = None  # (sites,) positive lapse, default 1
    dA0_dt: Optional[Callable[[float], np.ndarray]] = None
    name: str = "system"

    def __post_init__(self):
        g = self.grid
        object.__setattr__(self, "A0", _per_site(g, self.A0))
        object.__setattr__(self, "Aj", tuple(_per_site(g, a) for a in self.Aj))
        if len(self.Aj) != g.dim:
            raise SystemError(f"need {g.dim} spatial coefficient(s), got {len(self.Aj)}")
        if self.S0 is not None:
            object.__setattr__(self, "S0", _per_site(g, self.S0))
        b = self.beta
        if b is None:
            b = np.ones(g.sites)
        else:
            b = np.broadcast_to(np.asarray(b, dtype=float), (g.sites,)).copy()
            if np.min(b) <= 0:
                raise SystemError("lapse must be positive")
        object.__setattr__(self, "beta", b)
        if _hermiticity_defect(self.A0) > 1e-12:
            raise SystemError("A0 not Hermitian")
        if np.min(np.linalg.eigvalsh(self.A0)) <= 0:
            raise SystemError("A0 not positive definite")
        object.__setattr__(self, "_A0_inv", np.linalg.inv(self.A0))
        # max |eigenvalue| of A0^{-1} A^j over sites and axes = signal speed
        vmax = 0.0
        for a in self.Aj:
            m = self._A0_inv @ a
            ev = np.linalg.eigvals(m)
            vmax = max(vmax, float(np.max(np.abs(ev))) if ev.size else 0.0)
        object.__setattr__(self, "_v_max", vmax)

    @property
    def A0_inv(self) -> np.ndarray:
        return self._A0_inv

    @property
    def v_max(self) -> float:
        return self._v_max

    @property
    def constant_in_time(self) -> bool:
        return self.S0_t is None and self.dA0_dt is None

    def S0_at(self, t: float) -> Optional[np.ndarray]:
        if self.S0_t is not None:
            return _per_site(self.grid, self.S0_t(t))
        return self.S0

    def constant_coefficients(self) -> bool:
        """True when every coefficient is site-independent."""
        def const(m):
            return bool(np.all(m == m[0]))
        return (const(self.A0) and all(const(a) for a in self.Aj)
                and (self.S0 is None or const(self.S0))
                and bool(np.all(self.beta == self.beta[0])))


def make_system(grid: Grid, A0, Aj: Sequence, S0=None, S0_t=None, beta=None,
                dA0_dt=None, name: str = "system") -> SystemSpec:
    return SystemSpec(grid=grid, A0=A0, Aj=tuple(Aj), S0=S0, S0_t=S0_t,
                      beta=beta, dA0_dt=dA0_dt, name=name)


def transport_system(grid: Grid, speed: float = 1.0, name: str = "transport") -> SystemSpec:
    """Scalar advection d_t psi + speed d_x psi = source (A0=1, A1=speed)."""
    if grid.fiber != 1:
        raise SystemError("transport system is scalar")
    one = np.ones((1, 1))
    return make_system(grid, one, [speed * one] * grid.dim, name=name)


def ode_system(grid: Grid, S0, name: str = "ode") -> SystemSpec:
    """No spatial principal part: d_t psi = A0^{-1} S0 psi + source."""
    f = grid.fiber
    eye = np.eye(f)
    return make_system(grid, eye, [np.zeros((f, f))] * grid.dim, S0=S0, name=name)


def _mat_apply(m: Optional[np.ndarray], v: np.ndarray) -> np.ndarray:
    if m is None:
        return np.zeros_like(v)
    return np.einsum("sfg,sg->sf", m, v)


def inner_weight(sys: SystemSpec) -> InnerWeight:
    """Slice weight beta * A0 (the time symbol of the conformally scaled
    metric composed with the bundle metric)."""
    return InnerWeight(sys.grid, sys.beta[:, None, None] * sys.A0, sys.beta)


def evolution_rhs(sys: SystemSpec, values: np.ndarray, t: float,
                  source: Optional[np.ndarray] = None) -> np.ndarray:
    """Method-of-lines right-hand side of S psi = source:

        d_t psi = A0^{-1} (source + S0 psi - sum_j A^j D_j psi).
    """
    acc = np.zeros_like(values)
    if source is not None:
        acc += source
    s0 = sys.S0_at(t)
    if s0 is not None:
        acc += _mat_apply(s0, values)
    for j, a in enumerate(sys.Aj):
        acc -= _mat_apply(a, diff4(sys.grid, values, j))
    return _mat_apply(sys.A0_inv, acc)


def apply_S(sys: SystemSpec, values: np.ndarray, dpsi_dt: np.ndarray,
            t: float) -> np.ndarray:
    """S psi given the field and its time derivative on one slice."""
    out = _mat_apply(sys.A0, dpsi_dt)
    for j, a in enumerate(sys.Aj):
        out += _mat_apply(a, diff4(sys.grid, values, j))
    s0 = sys.S0_at(t)
    if s0 is not None:
        out -= _mat_apply(s0, values)
    return out


def symbol_divergence(sys: SystemSpec, t: float) -> np.ndarray:
    """d_mu A^mu per site: stencil divergence of the spatial coefficients
    plus the d_t A0 callback (zero for constant-in-time A0)."""
    g = sys.grid
    f = g.fiber
    out = np.zeros((g.sites, f, f), dtype=complex)
    if sys.dA0_dt is not None:
        out += _per_site(g, sys.dA0_dt(t))
    for j, a in enumerate(sys.Aj):
        if np.all(a == a[0]):
            continue  # constant coefficient, divergence 0 exactly
        flatmat = a.reshape(g.sites, f * f)
        d = diff4(Grid(g.dim, g.extent, g.points, f * f), flatmat, j)
        out += d.reshape(g.sites, f, f)
    return out


def zero_order_Z(sys: SystemSpec, values: np.ndarray, t: float) -> np.ndarray:
    """Z psi = beta * (beta A0)^{-1} (S + S^dagger) psi from the closed form

        (S + S^dagger) psi = -(S0 + S0^dagger) psi - (d_mu A^mu) psi,

    flat-metric Christoffel terms being zero on the periodic lattice."""
    acc = np.zeros_like(values)
    s0 = sys.S0_at(t)
    if s0 is not None:
        acc -= _mat_apply(s0 + np.conj(np.swapaxes(s0, 1, 2)), values)
    div = symbol_divergence(sys, t)
    if np.any(div):
        acc -= _mat_apply(div, values)
    return _mat_apply(sys.A0_inv, acc)


def zero_order_matrices(sys: SystemSpec, t: float) -> np.ndarray:
    """Per-site matrix of the zero-order operator Z (it is a multiplication
    operator); used for exact norm measurement."""
    g = sys.grid
    f = g.fiber
    acc = np.zeros((g.sites, f, f), dtype=complex)
    s0 = sys.S0_at(t)
    if s0 is not None:
        acc -= s0 + np.conj(np.swapaxes(s0, 1, 2))
    acc -= symbol_divergence(sys, t)
    return sys.A0_inv @ acc


def _plain_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.einsum("sf,sf->", np.conj(a), b)) * grid.cell_volume


def adjoint_defect(sys: SystemSpec, a: StateField, b: StateField, t: float,
                   stencil: str = "central4") -> float:
    """|<S a, b> - <a, S^dagger b>| for the spatial part of S at fixed t,
    with the plain lattice inner product and the closed-form adjoint

        S^dagger b = -sum_j A^j D_j b - (d_j A^j) b - S0^dagger b.

    With the skew-symmetric central stencil and constant coefficients the
    identity is exact to round-off; the one-sided stencil option exhibits the
    documented O(dx) failure."""
    if (not np.all(sys.beta == 1.0)) and any(np.any(m != m[0]) for m in sys.Aj):
        raise SystemError("nonunit lapse with variable coefficients unsupported")
    deriv = diff4 if stencil == "central4" else diff_upwind
    g = sys.grid
    s0 = sys.S0_at(t)

    sa = np.zeros_like(a.values)
    for j, m in enumerate(sys.Aj):
        sa += _mat_apply(m, deriv(g, a.values, j))
    if s0 is not None:
        sa -= _mat_apply(s0, a.values)

    sdb = np.zeros_like(b.values)
    for j, m in enumerate(sys.Aj):
        sdb -= _mat_apply(m, deriv(g, b.values, j))
    sdb -= _mat_apply(symbol_divergence(sys, t), b.values)
    if s0 is not None:
        sdb -= _mat_apply(np.conj(np.swapaxes(s0, 1, 2)), b.values)

    return abs(_plain_inner(g, sa, b.values) - _plain_inner(g, a.values, sdb))


@dataclass
class ValidationReport:
    symmetric: bool
    hyperbolic: bool
    min_eig_samples: list          # (alpha vector, min eigenvalue) pairs
    adjoint_defect: float

    @property
    def ok(self) -> bool:
        return self.symmetric and self.hyperbolic


def validate_system(sys: SystemSpec, n_dirs: int = 16, seed: int = 0) -> ValidationReport:
    """Check Hermiticity of the coefficients and positive definiteness of
    A0 + sum_j alpha_j A^j for sampled |alpha| < 1 at every site."""
    if n_dirs < 8:
        raise SystemError("need at least 8 sampled directions")
    herm = max(_hermiticity_defect(sys.A0),
               max((_hermiticity_defect(a) for a in sys.Aj), default=0.0))
    symmetric = herm <= 1e-12

    rng = np.random.Generator(np.random.Philox(seed))
    samples = []
    hyperbolic = True
    for _ in range(n_dirs):
        alpha = rng.normal(size=sys.grid.dim)
        r = rng.uniform(0.0, 0.999)
        n = np.linalg.norm(alpha)
        alpha = alpha * (r / n) if n > 0 else alpha
        m = sys.A0.copy()
        for j, a in enumerate(sys.Aj):
            m = m + alpha[j] * a
        me = float(np.min(np.linalg.eigvalsh(m)))
        samples.append((alpha.tolist(), me))
        if me <= 0:
            hyperbolic = False

    g = sys.grid
    rng2 = np.random.Generator(np.random.Philox(seed + 1))
    av = rng2.normal(size=(g.sites, g.fiber)) + 1j * rng2.normal(size=(g.sites, g.fiber))
    bv = rng2.normal(size=(g.sites, g.fiber)) + 1j * rng2.normal(size=(g.sites, g.fiber))
    try:
        defect = adjoint_defect(sys, StateField(g, 0.0, av), StateField(g, 0.0, bv), 0.0)
    except SystemError:
        defect = math.nan
    return ValidationReport(symmetric=symmetric, hyperbolic=hyperbolic,
                            min_eig_samples=samples, adjoint_defect=defect)


# ---------------------------------------------------------------------------
# JSON serialization: constant matrices inline (row-major re/im pairs),
# spatially varying coefficients as named built-in profiles.

def _matrix_to_json(m: np.ndarray) -> list:
    # constant per-site stack -> single fiber matrix, row-major [re, im] pairs
    mat = m[0]
    return [[[float(v.real), float(v.imag)] for v in row] for row in mat]


def _matrix_from_json(spec, f: int) -> np.ndarray:
    m = np.array([[complex(c[0], c[1]) for c in row] for row in spec])
    if m.shape != (f, f):
        raise SystemError(f"matrix shape {m.shape} != ({f}, {f})")
    return m


def _profile_offset_sin(grid: Grid, c0: float, c1: float, k: float) -> np.ndarray:
    x = grid.coords()[:, 0]
    vals = c0 + c1 * np.sin(k * x)
    eye = np.eye(grid.fiber)
    return vals[:, None, None] * eye


PROFILES = {"offset_sin": _profile_offset_sin}


def _coeff_to_json(m: np.ndarray, profile_meta) -> dict:
    if profile_meta is not None:
        return {"profile": profile_meta[0], "params": profile_meta[1]}
    if not np.all(m == m[0]):
        raise SystemError("spatially varying coefficient needs a named profile")
    return {"matrix": _matrix_to_json(m)}


def system_to_json(sys: SystemSpec, profiles: Optional[dict] = None) -> dict:
    """Serialize; `profiles` optionally maps 'A0'/'Aj0'.../'S0' to
    (profile_name, params) for spatially varying coefficients."""
    profiles = profiles or {}
    doc = {
        "grid": {"dim": sys.grid.dim, "extent": sys.grid.extent,
                 "points": sys.grid.points, "fiber": sys.grid.fiber},
        "A0": _coeff_to_json(sys.A0, profiles.get("A0")),
        "Aj": [_coeff_to_json(a, profiles.get(f"Aj{j}"))
               for j, a in enumerate(sys.Aj)],
        "name": sys.name,
    }
    if sys.S0 is not None:
        doc["S0"] = _coeff_to_json(sys.S0, profiles.get("S0"))
    if not np.all(sys.beta == 1.0):
        doc["beta"] = {"profile": profiles["beta"][0], "params": profiles["beta"][1]} \
            if "beta" in profiles else {"constant": float(sys.beta[0])}
    return doc


def _coeff_from_json(spec: dict, grid: Grid) -> np.ndarray:
    if "matrix" in spec:
        return _per_site(grid, _matrix_from_json(spec["matrix"], grid.fiber))
    if "profile" in spec:
        name = spec["profile"]
        if name not in PROFILES:
            raise SystemError(f"unknown coefficient profile {name!r}")
        return PROFILES[name](grid, **spec["params"])
    raise SystemError(f"coefficient spec needs 'matrix' or 'profile': {spec}")


def system_from_json(doc: dict) -> SystemSpec:
    g = doc["grid"]
    grid = Grid(int(g["dim"]), float(g["extent"]), int(g["points"]), int(g["fiber"]))
    A0 = _coeff_from_json(doc["A0"], grid)
    Aj = [_coeff_from_json(a, grid) for a in doc["Aj"]]
    S0 = _coeff_from_json(doc["S0"], grid) if "S0" in doc else None
    beta = None
    if "beta" in doc:
        b = doc["beta"]
        beta = np.full(grid.sites, float(b["constant"])) if "constant" in b \
            else PROFILES[b["profile"]](grid, **b["params"])[:, 0, 0].real
    return make_system(grid, A0, Aj, S0=S0, beta=beta,
                       name=doc.get("name", "system"))
