"""Time the compiled kernels against the numpy fallback and check they agree.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each row
reports the best of N runs per backend, the speed-up and the largest
difference between the two results.
"""
import argparse
import math
import time

import numpy as np

from serrinwarp import kernels
from serrinwarp.catalog import build_entry
from serrinwarp.field2d import ball_grid, eikonal_distance
from serrinwarp.geodesics import distance_by_shooting
from serrinwarp.radial import obata_ode_solve, solve_radial_bvp


def best_time(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    hyp = build_entry("space_form", {"k": -1.0}, 2).manifold
    flat = build_entry("linear", {"c1": 0.0, "c2": 1.0}, 2).manifold
    grid = ball_grid(flat, (2.0, 0.0), 0.5, 1 / 64)
    return [
        ("radial shooting, step 1e-4",
         lambda b: solve_radial_bvp(hyp, -1.0, 1.0, 1e-4, backend=b).u),
        ("Hessian ODE, 20000 steps",
         lambda b: obata_ode_solve(1.0, 3, 0.1, 2.0, 1e-4, backend=b)[1]),
        ("geodesic distance (256-ray sweep + Newton)",
         lambda b: np.array([distance_by_shooting(hyp, (1.0, 0.0), (1.5, 1.0), backend=b)])),
        ("fast marching, h = 1/64 disk",
         lambda b: np.nan_to_num(eikonal_distance(flat, (2.0, 0.0), grid, backend=b).values, nan=-1.0)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled kernels not built; only the numpy fallback is available")
        return 1
    print(f"{'kernel':45s} {'compiled':>10s} {'python':>10s} {'speed-up':>9s} {'max diff':>10s}")
    for name, fn in cases():
        tc, oc = best_time(lambda: fn("compiled"), args.repeat)
        tp, op = best_time(lambda: fn("python"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(oc) - np.asarray(op))))
        print(f"{name:45s} {tc:9.4f}s {tp:9.4f}s {tp / tc:8.1f}x {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
