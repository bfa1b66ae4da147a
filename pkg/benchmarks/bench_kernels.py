"""Compiled vs pure-Python kernels: Crank–Nicolson sweep and RK4 trajectory integration.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from madelung_bvp import kernels
from madelung_bvp.gridfields import PhysParams, SpaceTimeGrid
from madelung_bvp.oracle import gaussian_state
from madelung_bvp.trajectories import gaussian_history, GaussianParams, velocity_field

CASES = {
    "cn_512x400": (SpaceTimeGrid(-20.0, 20.0, 512, 0.0, 2.0, 401), None),
    "cn_2048x1000": (SpaceTimeGrid(-40.0, 40.0, 2048, 0.0, 2.0, 1001), None),
}


def bench_cn(grid, backend, repeat):
    p = PhysParams()
    psi0 = gaussian_state(grid, 1.0)
    V = p.V(grid)
    f = lambda: kernels.cn_propagate(psi0, V, grid.dx, grid.dt, p.hbar, p.mass, grid.nt - 1, 1, True, backend)
    return min(timeit.repeat(f, number=1, repeat=repeat)), f()


def bench_rk4(ntraj, backend, repeat):
    grid = SpaceTimeGrid(-12.0, 12.0, 401, 0.0, 2.0, 201)
    p = PhysParams()
    v = np.ascontiguousarray(velocity_field(gaussian_history(GaussianParams(1.0), p, grid), p))
    x0 = np.linspace(-3.0, 3.0, ntraj)
    f = lambda: kernels.rk4_bilinear(v, grid.x_min, grid.dx, grid.dt, x0, backend)
    return min(timeit.repeat(f, number=1, repeat=repeat)), f()[0]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not kernels.HAVE_COMPILED:
        print("compiled extension not built; only the python backend is available")
        return 1
    rows = []
    for name, (grid, _) in CASES.items():
        tc, sc = bench_cn(grid, "compiled", args.repeat)
        tp, spy = bench_cn(grid, "python", args.repeat)
        rows.append((name, tc, tp, float(np.max(np.abs(sc - spy)))))
    for n in (100, 1000):
        tc, pc = bench_rk4(n, "compiled", args.repeat)
        tp, pp = bench_rk4(n, "python", args.repeat)
        rows.append((f"rk4_{n}traj_401x201", tc, tp, float(np.nanmax(np.abs(pc - pp)))))
    print(f"{'case':<26}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, tc, tp, d in rows:
        print(f"{name:<26}{tc:>14.4g}{tp:>14.4g}{tp / tc:>10.2f}{d:>13.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([dict(case=n, compiled=tc, python=tp, speedup=tp / tc, max_abs_diff=d)
                       for n, tc, tp, d in rows], fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
