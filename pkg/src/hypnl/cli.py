"""Command-line entry point: configuration loading with strict schema
checking, scenario orchestration (optionally fanned out over a thread pool
capped by HYPNL_THREADS), and report/CSV persistence.

Exit codes: 0 pass, 1 configuration or runtime error, 2 assertion failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .grids import make_grid, StateField
from .systems import (inner_weight, system_from_json, validate_system)
from .kernels import estimate_bound, threshold_margin
from .solver import SolveOptions, solve_local
from .dyson import result_to_csv, result_to_json
from .diagnostics import energy_identity, measure_D
from .scenarios import (CounterexampleConfig, DiracConfig, MaxwellConfig,
                        build_counterexample, counterexample_report,
                        dirac_kernel, dirac_system, dirac_run, drude_lorentz,
                        extended_system_check, maxwell_kernel,
                        maxwell_system_1d, maxwell_system_3d, maxwell_run,
                        bump)


class ConfigError(ValueError):
    pass


SCHEMA_VERSION = 1

_SCENARIOS = ("custom", "counterexample", "maxwell", "dirac", "extended_check")

_TOP_KEYS = {"schema", "scenario", "name", "seed", "options", "members"}

_OPTION_KEYS = {
    "counterexample": {f.name for f in dataclasses.fields(CounterexampleConfig)},
    "maxwell": {f.name for f in dataclasses.fields(MaxwellConfig)},
    "dirac": {f.name for f in dataclasses.fields(DiracConfig)},
    "extended_check": {"n_fields", "seed", "points", "fiber", "frames", "rank"},
    "custom": {"system", "dt", "cfl", "dissipation", "T", "kernel",
               "data_width"},
}

_KERNEL_KEYS = {"kind", "chi0", "c1", "c2", "delta"}


@dataclasses.dataclass
class RunConfig:
    scenario: str
    name: str
    seed: int
    options: dict
    members: Optional[list] = None
    raw: dict = dataclasses.field(default_factory=dict)


def _check_keys(doc: dict, allowed: set, path: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}{key}'")


def _validate_doc(doc: dict, path: str = "") -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"config at '{path or '.'}' must be an object")
    _check_keys(doc, _TOP_KEYS, path)
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"'{path}schema' must be {SCHEMA_VERSION}")
    members = doc.get("members")
    if members is not None:
        if not isinstance(members, list) or not members:
            raise ConfigError(f"'{path}members' must be a nonempty list")
        sub = [_validate_doc(m, path=f"{path}members[{i}].")
               for i, m in enumerate(members)]
        return RunConfig(scenario="batch", name=str(doc.get("name", "batch")),
                         seed=int(doc.get("seed", 0)), options={},
                         members=sub, raw=doc)
    scenario = doc.get("scenario")
    if scenario not in _SCENARIOS:
        raise ConfigError(f"'{path}scenario' must be one of {_SCENARIOS}")
    options = doc.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError(f"'{path}options' must be an object")
    _check_keys(options, _OPTION_KEYS[scenario], f"{path}options.")
    for key, val in options.items():
        if key in ("system", "kernel"):
            continue
        if key == "mode":
            if not isinstance(val, str):
                raise ConfigError(f"'{path}options.mode' must be a string")
            continue
        if isinstance(val, bool) or val is None:
            continue
        if not isinstance(val, (int, float)):
            raise ConfigError(f"'{path}options.{key}' must be a number")
    if scenario == "custom":
        if "system" not in options:
            raise ConfigError(f"'{path}options.system' is required for "
                              "custom runs")
        kern = options.get("kernel")
        if kern is not None:
            if not isinstance(kern, dict):
                raise ConfigError(f"'{path}options.kernel' must be an object")
            _check_keys(kern, _KERNEL_KEYS, f"{path}options.kernel.")
            if kern.get("kind") not in ("none", "drude_lorentz"):
                raise ConfigError(f"'{path}options.kernel.kind' must be "
                                  "'none' or 'drude_lorentz'")
    return RunConfig(scenario=scenario,
                     name=str(doc.get("name", scenario)),
                     seed=int(doc.get("seed", 0)),
                     options=dict(options), raw=doc)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return _validate_doc(doc)


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# scenario assembly

def _seeded_options(cfg: RunConfig) -> dict:
    opts = dict(cfg.options)
    opts.setdefault("seed", cfg.seed)
    return opts


def _build_custom(cfg: RunConfig):
    """(system, kernel-or-None, SolveOptions, T) for a custom config."""
    opts = cfg.options
    sys_spec = system_from_json(opts["system"])
    dt = opts.get("dt")
    cfl = float(opts.get("cfl", 0.25))
    if dt is None:
        v = max(sys_spec.v_max, 1e-12)
        dt = cfl * sys_spec.grid.spacing / v
    sopts = SolveOptions(dt=float(dt), cfl=cfl,
                         dissipation=float(opts.get("dissipation", 0.0)))
    kern = None
    kspec = opts.get("kernel")
    if kspec and kspec.get("kind") == "drude_lorentz":
        _, chi_dot = drude_lorentz(float(kspec.get("chi0", 0.2)),
                                   float(kspec.get("c1", 1.0)),
                                   float(kspec.get("c2", 2.0)))
        kern = maxwell_kernel(sys_spec.grid, chi_dot,
                              delta_eff=float(kspec.get("delta", math.inf)))
    T = float(opts.get("T", sys_spec.grid.extent))
    T = round(T / sopts.dt) * sopts.dt
    return sys_spec, kern, sopts, T


def _bounds_subject(cfg: RunConfig):
    """(system, kernel, delta) for check-bounds / validate."""
    opts = _seeded_options(cfg)
    if cfg.scenario == "dirac":
        dcfg = DiracConfig(**opts)
        grid = make_grid(1, dcfg.extent, dcfg.points, 2)
        sys_spec = dirac_system(grid, dcfg.mass)
        kern, C = dirac_kernel(dcfg, grid)
        return sys_spec, kern, dcfg.delta, C
    if cfg.scenario == "counterexample":
        ccfg = CounterexampleConfig(**opts)
        sys_spec, kern, _, _ = build_counterexample(ccfg)
        return sys_spec, kern, ccfg.delta, None
    if cfg.scenario == "maxwell":
        mcfg = MaxwellConfig(**opts)
        if mcfg.mode in ("vacuum_3d", "constraints_3d"):
            grid = make_grid(3, mcfg.extent, mcfg.points, 6)
            sys_spec = maxwell_system_3d(grid)
        else:
            grid = make_grid(1, mcfg.extent, mcfg.points, 2)
            sys_spec = maxwell_system_1d(grid)
        _, chi_dot = drude_lorentz(mcfg.chi0, mcfg.c1, mcfg.c2)
        kern = maxwell_kernel(grid, chi_dot)
        return sys_spec, kern, math.inf, None
    if cfg.scenario == "custom":
        sys_spec, kern, _, _ = _build_custom(cfg)
        delta = kern.delta if kern is not None else math.inf
        return sys_spec, kern, delta, None
    raise ConfigError(f"scenario {cfg.scenario!r} has no bound subject")


# ---------------------------------------------------------------------------
# persistence

def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _series_csv(path: str, header: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in zip(*columns):
            wr.writerow([f"{v:.17g}" if isinstance(v, float) else v
                         for v in row])


def _manifest(cfg: RunConfig, outdir: str, constants: dict,
              extra: Optional[dict] = None) -> None:
    doc = {
        "config_hash": config_hash(cfg),
        "version": __version__,
        "scenario": cfg.scenario,
        "name": cfg.name,
        "seed": cfg.seed,
        "constants": {k: (v if math.isfinite(v) else str(v))
                      for k, v in constants.items()},
    }
    if extra:
        doc.update(extra)
    _write_json(os.path.join(outdir, "manifest.json"), doc)


def _result_constants(res) -> dict:
    cfgd = res.config
    out = {}
    for key in ("C_est", "D", "M", "K_T", "M_T", "delta", "T", "W"):
        if key in cfgd and isinstance(cfgd[key], (int, float)):
            out[key] = float(cfgd[key])
    if "K_T" not in out and "C_est" in out and "D" in out and "T" in out:
        out["K_T"] = out["C_est"] * math.exp(out["D"] * out["T"] / 2.0)
    if "M_T" not in out and "M" in out and "D" in out and "T" in out:
        out["M_T"] = out["M"] * math.exp(out["D"] * out["T"] / 2.0)
    return out


# ---------------------------------------------------------------------------
# scenario runners: return (report_doc, constants, failures)

def _run_counterexample(cfg: RunConfig, outdir: str):
    ccfg = CounterexampleConfig(**_seeded_options(cfg))
    rep = counterexample_report(ccfg)
    div = rep["divergent"]
    failures = []
    if rep["margin"] <= 1.0:
        failures.append(f"margin {rep['margin']:.3g} not above threshold")
    if rep["witness"] < rep["witness_floor"]:
        failures.append("pointwise witness below 2/delta^2")
    if div.verdict == "Converged":
        failures.append("divergent configuration reported Converged")
    for eps, fam in rep["family"].items():
        if fam["verdict"] != "Converged":
            failures.append(f"eps={eps} family member not Converged")
        if fam["rel_error"] > 1e-4:
            failures.append(f"eps={eps} closed-form mismatch "
                            f"{fam['rel_error']:.2e}")
    result_to_csv(div, os.path.join(outdir, "divergent.csv"))
    doc = {
        "C_est": rep["C_est"], "margin": rep["margin"],
        "witness": rep["witness"], "witness_floor": rep["witness_floor"],
        "divergent": result_to_json(div),
        "obstruction_pairings": [[p.real, p.imag]
                                 for p in rep["obstruction_pairings"]],
        "family": {str(e): {"verdict": f["verdict"],
                            "rel_error": f["rel_error"],
                            "n_used": f["n_used"]}
                   for e, f in rep["family"].items()},
        "cone_pass": bool(rep["diag_cone"].passed),
    }
    consts = {"C_est": rep["C_est"], "D": rep["D"], "margin": rep["margin"]}
    consts.update(_result_constants(div))
    return doc, consts, failures


def _run_maxwell(cfg: RunConfig, outdir: str):
    mcfg = MaxwellConfig(**_seeded_options(cfg))
    rep = maxwell_run(mcfg)
    failures = []
    doc = {"mode": mcfg.mode}
    consts = {}
    if "result" in rep:
        res = rep["result"]
        doc["dyson"] = result_to_json(res)
        result_to_csv(res, os.path.join(outdir, "dyson.csv"))
        consts.update(_result_constants(res))
    if mcfg.mode == "vacuum_1d":
        doc["wave_error"] = rep["wave_error"]
        doc["norm_drift"] = rep["norm_drift"]
        if rep["wave_error"] > 1e-6:
            failures.append(f"plane-wave error {rep['wave_error']:.2e} > 1e-6")
    elif mcfg.mode == "vacuum_3d":
        doc["semi_discrete_error"] = rep["semi_discrete_error"]
        doc["continuum_gap"] = rep["continuum_gap"]
        if rep["semi_discrete_error"] > 1e-4:
            failures.append("3D semi-discrete wave mismatch")
    elif mcfg.mode == "constraints_3d":
        doc["gauss_residual"] = rep["gauss_residual"]
        doc["divb_drift"] = rep["divb_drift"]
        doc["field_scale"] = rep["field_scale"]
        tol = 1e-6 * rep["field_scale"]
        if rep["gauss_residual"] > tol:
            failures.append("nonlocal Gauss constraint violated")
        if rep["divb_drift"] > tol:
            failures.append("divB drift above tolerance")
    elif mcfg.mode == "volterra":
        doc["volterra_error"] = rep["volterra_error"]
        doc["b_drift"] = rep["b_drift"]
        _series_csv(os.path.join(outdir, "volterra.csv"),
                    ["t", "re_E", "im_E", "re_oracle", "im_oracle"],
                    [list(map(float, rep["times"])),
                     [float(v.real) for v in rep["series"]],
                     [float(v.imag) for v in rep["series"]],
                     [float(v.real) for v in rep["oracle"]],
                     [float(v.imag) for v in rep["oracle"]]])
        if rep["volterra_error"] > 1e-6:
            failures.append(f"Volterra mismatch {rep['volterra_error']:.2e}")
    elif mcfg.mode == "dispersive_1d":
        doc["cone_pass"] = bool(rep["cone"].passed)
        if not rep["cone"].passed:
            failures.append("propagation cone violated")
    return doc, consts, failures


def _run_dirac(cfg: RunConfig, outdir: str):
    dcfg = DiracConfig(**_seeded_options(cfg))
    rep = dirac_run(dcfg)
    res = rep["result"]
    failures = []
    if rep["clifford_defect"] > 1e-14:
        failures.append("Clifford relations violated")
    if rep["spin_symmetry_defect"] > 1e-14:
        failures.append("spin-product symmetry violated")
    if rep["kernel_symmetry_defect"] > 1e-10:
        failures.append("kernel symmetry above quadrature tolerance")
    if rep["free_norm_drift"] > 1e-8:
        failures.append(f"free-run norm drift {rep['free_norm_drift']:.2e}")
    if rep["margin"] >= 1.0:
        failures.append("margin not in the convergent regime")
    if rep["surface_drift"] > 5e-3:
        failures.append(f"surface-layer drift {rep['surface_drift']:.2e}")
    if not rep["diffes_ok"]:
        failures.append("difference-estimate inequality violated")
    ratios = rep["sprod_ratios"]
    if np.min(ratios) < 0.5 or np.max(ratios) > 2.0:
        failures.append("two-sided product bounds violated")
    result_to_csv(res, os.path.join(outdir, "dyson.csv"))
    _series_csv(os.path.join(outdir, "surface_product.csv"),
                ["t", "surface_product", "slice_norm_sq"],
                [list(map(float, rep["times"])),
                 list(map(float, rep["surface_series"])),
                 list(map(float, rep["plain_series"]))])
    doc = {
        "clifford_defect": rep["clifford_defect"],
        "spin_symmetry_defect": rep["spin_symmetry_defect"],
        "kernel_symmetry_defect": rep["kernel_symmetry_defect"],
        "free_norm_drift": rep["free_norm_drift"],
        "margin": rep["margin"],
        "verdict": res.verdict,
        "surface_drift": rep["surface_drift"],
        "sprod_ratio_min": float(np.min(ratios)),
        "sprod_ratio_max": float(np.max(ratios)),
        "diffes_ok": bool(rep["diffes_ok"]),
    }
    if "drift_order" in rep:
        doc["drift_order"] = rep["drift_order"]
    consts = {"C_est": rep["C_est"], "D": rep["D"], "margin": rep["margin"]}
    consts.update(_result_constants(res))
    return doc, consts, failures


def _run_extended(cfg: RunConfig, outdir: str):
    rep = extended_system_check(**_seeded_options(cfg))
    failures = []
    if rep["max_residual"] > 1e-6:
        failures.append(f"cross-residual {rep['max_residual']:.2e} > 1e-6")
    _series_csv(os.path.join(outdir, "residuals.csv"),
                ["field", "residual"],
                [list(range(len(rep["residuals"]))),
                 list(map(float, rep["residuals"]))])
    doc = {"max_residual": rep["max_residual"],
           "n_fields": len(rep["residuals"])}
    return doc, {}, failures


def _run_custom(cfg: RunConfig, outdir: str):
    sys_spec, kern, sopts, T = _build_custom(cfg)
    grid = sys_spec.grid
    width = float(cfg.options.get("data_width", grid.extent / 8.0))
    x0 = grid.coords()[:, 0]
    shaped = np.repeat(bump((x0 - grid.extent / 2.0) / width)[:, None],
                       grid.fiber, axis=1).astype(complex)
    data = StateField(grid, 0.0, shaped)
    failures = []
    if kern is None:
        tr = solve_local(sys_spec, None, data, 0.0, T, sopts)
        energy = energy_identity(sys_spec, tr, None, tolerance=math.inf)
        doc = {"kind": "free", "frames": tr.n_frames,
               "energy_residual_max": energy.summary_max}
        energy.to_csv(os.path.join(outdir, "energy.csv"))
        consts = {"D": measure_D(sys_spec)}
    else:
        from .dyson import dyson_retarded
        res = dyson_retarded(sys_spec, kern, None, data, T, sopts,
                             seed=cfg.seed)
        result_to_csv(res, os.path.join(outdir, "dyson.csv"))
        doc = {"kind": "dyson", "dyson": result_to_json(res)}
        consts = _result_constants(res)
        if res.verdict == "Diverged":
            failures.append("custom run diverged")
    return doc, consts, failures


_RUNNERS = {
    "counterexample": _run_counterexample,
    "maxwell": _run_maxwell,
    "dirac": _run_dirac,
    "extended_check": _run_extended,
    "custom": _run_custom,
}


def _execute(cfg: RunConfig, outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    doc, consts, failures = _RUNNERS[cfg.scenario](cfg, outdir)
    doc["failures"] = failures
    doc["pass"] = not failures
    _write_json(os.path.join(outdir, "report.json"), doc)
    _manifest(cfg, outdir, consts)
    return 0 if not failures else 2


def _thread_cap() -> int:
    raw = os.environ.get("HYPNL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HYPNL_THREADS={raw!r} is not an integer")
    return max(1, n)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    if cfg.members is None:
        code = _execute(cfg, outdir)
        print(f"{cfg.name}: {'pass' if code == 0 else 'FAIL'}")
        return code
    workers = _thread_cap()
    codes = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(_execute, m, os.path.join(outdir, m.name)): m
                for m in cfg.members}
        for fut in concurrent.futures.as_completed(futs):
            member = futs[fut]
            codes[member.name] = fut.result()
    _manifest(cfg, outdir, {}, extra={
        "members": {name: ("pass" if c == 0 else "fail")
                    for name, c in sorted(codes.items())},
        "workers": workers,
    })
    for name in sorted(codes):
        print(f"{name}: {'pass' if codes[name] == 0 else 'FAIL'}")
    return 0 if all(c == 0 for c in codes.values()) else 2


def cmd_check_bounds(args) -> int:
    cfg = load_config(args.config)
    if cfg.members is not None:
        raise ConfigError("check-bounds takes a single-scenario config")
    sys_spec, kern, delta, C_known = _bounds_subject(cfg)
    D = measure_D(sys_spec)
    if C_known is not None:
        C = C_known
    else:
        window = (0.0, sys_spec.grid.extent)
        est = estimate_bound(kern, sys_spec, probes=32, t_window=window,
                             seed=cfg.seed)
        C = est.C_est
    print(f"C_est {C:.6g}")
    print(f"D {D:.6g}")
    if math.isfinite(delta):
        margin = threshold_margin(C, delta)
        print(f"margin {margin:.3f} "
              + ("< 1: convergent regime" if margin < 1.0
                 else ">= 1: outside the smallness threshold — refuse"))
    else:
        print("margin n/a (kernel not short-range); retarded regime: converge")
    return 0


def cmd_counterexample(args) -> int:
    opts = {"delta": args.delta} if args.delta is not None else {}
    cfg = RunConfig(scenario="counterexample", name="counterexample",
                    seed=args.seed, options=opts,
                    raw={"schema": 1, "scenario": "counterexample",
                         "seed": args.seed, "options": opts})
    return _execute(cfg, args.out)


def cmd_maxwell(args) -> int:
    opts = {"mode": args.mode}
    if args.points is not None:
        opts["points"] = args.points
    cfg = RunConfig(scenario="maxwell", name=f"maxwell-{args.mode}",
                    seed=args.seed, options=opts,
                    raw={"schema": 1, "scenario": "maxwell",
                         "seed": args.seed, "options": opts})
    return _execute(cfg, args.out)


def cmd_dirac(args) -> int:
    opts = {}
    if args.points is not None:
        opts["points"] = args.points
    if args.no_refine:
        opts["refine"] = False
    cfg = RunConfig(scenario="dirac", name="dirac", seed=args.seed,
                    options=opts,
                    raw={"schema": 1, "scenario": "dirac", "seed": args.seed,
                         "options": opts})
    return _execute(cfg, args.out)


def cmd_extended_check(args) -> int:
    opts = {"n_fields": args.n_fields}
    cfg = RunConfig(scenario="extended_check", name="extended-check",
                    seed=args.seed, options=opts,
                    raw={"schema": 1, "scenario": "extended_check",
                         "seed": args.seed, "options": opts})
    return _execute(cfg, args.out)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    if cfg.members is not None:
        raise ConfigError("validate takes a single-scenario config")
    sys_spec, _, _, _ = _bounds_subject(cfg)
    rep = validate_system(sys_spec, seed=cfg.seed)
    min_eig = min(e for _, e in rep.min_eig_samples)
    print(f"symmetric {rep.symmetric}")
    print(f"hyperbolic {rep.hyperbolic} (min sampled eigenvalue {min_eig:.6g})")
    print(f"adjoint defect {rep.adjoint_defect:.3e}")
    print("ok" if rep.ok else "FAILED")
    return 0 if rep.ok else 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hypnl",
        description="Nonlocal-in-time hyperbolic Cauchy problems: iterative "
                    "series solver, bound checks, and verification scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a config (or batch) and write "
                                     "a report bundle")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.set_defaults(fn=cmd_run)

    cb = sub.add_parser("check-bounds", help="print C_est, D and the "
                                             "threshold margin without solving")
    cb.add_argument("--config", required=True)
    cb.set_defaults(fn=cmd_check_bounds)

    cx = sub.add_parser("counterexample", help="run the rank-one divergence "
                                               "scenario")
    cx.add_argument("--delta", type=float, default=None)
    cx.add_argument("--seed", type=int, default=0)
    cx.add_argument("--out", default="out-counterexample")
    cx.set_defaults(fn=cmd_counterexample)

    mx = sub.add_parser("maxwell", help="run a dispersive Maxwell scenario")
    mx.add_argument("--mode", default="vacuum_1d",
                    choices=["vacuum_1d", "vacuum_3d", "constraints_3d",
                             "volterra", "dispersive_1d"])
    mx.add_argument("--points", type=int, default=None)
    mx.add_argument("--seed", type=int, default=0)
    mx.add_argument("--out", default="out-maxwell")
    mx.set_defaults(fn=cmd_maxwell)

    dr = sub.add_parser("dirac", help="run the nonlocal Dirac scenario")
    dr.add_argument("--points", type=int, default=None)
    dr.add_argument("--no-refine", action="store_true")
    dr.add_argument("--seed", type=int, default=0)
    dr.add_argument("--out", default="out-dirac")
    dr.set_defaults(fn=cmd_dirac)

    ex = sub.add_parser("extended-check", help="first-derivative extended "
                                               "system consistency check")
    ex.add_argument("--n-fields", type=int, default=20)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--out", default="out-extended")
    ex.set_defaults(fn=cmd_extended_check)

    va = sub.add_parser("validate", help="structural checks of the configured "
                                         "system only")
    va.add_argument("--config", required=True)
    va.set_defaults(fn=cmd_validate)
    return p


def cli_run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:      # noqa: BLE001 — CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
