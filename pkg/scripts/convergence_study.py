#!/usr/bin/env python3
"""Self-convergence of the local solver on a transported Gaussian pulse:
halve dt and dx together three times and report the observed L2 orders."""

import argparse
import math

import numpy as np

from hypnl.grids import StateField, make_grid
from hypnl.systems import transport_system
from hypnl.solver import SolveOptions, solve_local


def pulse(grid, t=0.0, speed=1.0):
    x = grid.coords()[:, 0]
    c = grid.extent / 2.0
    u = np.remainder(x - speed * t - c + grid.extent / 2.0,
                     grid.extent) - grid.extent / 2.0
    return np.exp(-(u / (grid.extent / 16.0)) ** 2)[:, None].astype(complex)


def run(points, T):
    grid = make_grid(1, 2 * math.pi, points, 1)
    sys = transport_system(grid)
    opts = SolveOptions(dt=0.25 * grid.spacing)
    data = StateField(grid, 0.0, pulse(grid))
    Ts = round(T / opts.dt) * opts.dt
    tr = solve_local(sys, None, data, 0.0, Ts, opts)
    err = tr.values[-1] - pulse(grid, Ts)
    return math.sqrt(
        np.einsum("sf,sf->", np.conj(err), err).real * grid.cell_volume)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-points", type=int, default=64)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--T", type=float, default=math.pi)
    args = ap.parse_args()

    errs = []
    for lvl in range(args.levels):
        pts = args.base_points * (2 ** lvl)
        errs.append(run(pts, args.T))
        line = f"points {pts:5d}   err {errs[-1]:.4e}"
        if lvl:
            order = math.log(errs[-2] / errs[-1]) / math.log(2.0)
            line += f"   order {order:.2f}"
        print(line)


if __name__ == "__main__":
    main()
