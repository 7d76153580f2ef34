#!/usr/bin/env python3
"""Benchmark the Bellman sweep kernels: numba @njit vs pure-numpy fallback.

Runs the same backward recursion through both implementations on the
stormwater baseline, verifies the outputs are bit-identical, and reports
wall time per sweep. The numpy path is what the package uses when
CVARSAFE_NUMBA=0 (or numba is unavailable).

Usage:
    python benchmarks/bench_dp.py [--x 25] [--z 11] [--actions 11]
                                  [--atoms 9] [--steps 20] [--repeat 3]
"""

import argparse
import time

import numpy as np

from cvarsafe import (AugmentedGrid, default_disturbance, design_params,
                      make_stormwater_model, precompute_transitions,
                      smoke_disturbance)
from cvarsafe._kernels import sweep_numpy, sweep_kernel, backend


def run_recursion(kernel, trans, grid, steps, s=0.5):
    J = np.maximum(
        np.maximum(trans.terminal[:, None], grid.z_axis[None, :]) - s, 0.0)
    for _ in range(steps):
        J, U = kernel(J, grid.z_axis, trans.cost, trans.probs,
                      trans.corner_idx, trans.corner_wt,
                      trans.cz_idx, trans.cz_frac)
    return J, U


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--x", type=int, default=25)
    parser.add_argument("--z", type=int, default=11)
    parser.add_argument("--actions", type=int, default=11)
    parser.add_argument("--atoms", type=int, choices=(2, 9), default=9)
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    dist = default_disturbance() if args.atoms == 9 else smoke_disturbance()
    model = make_stormwater_model(design_params("a"), dist)
    grid = AugmentedGrid.uniform(model, (args.x, args.x), args.z,
                                 args.actions, 3)
    trans = precompute_transitions(model, grid)
    nodes = grid.n_xnodes * args.z
    print(f"grid: {args.x}x{args.x} states, {args.z} z nodes "
          f"({nodes} augmented nodes), {args.actions} actions, "
          f"{args.atoms} atoms, {args.steps} steps")

    kernels = [("numpy", sweep_numpy)]
    if backend() == "numba":
        run_recursion(sweep_kernel, trans, grid, 1)  # compile before timing
        kernels.append(("numba", sweep_kernel))
    else:
        print("numba backend inactive (CVARSAFE_NUMBA=0 or import failed); "
              "timing numpy only")

    results = {}
    for name, kernel in kernels:
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            J, U = run_recursion(kernel, trans, grid, args.steps)
            best = min(best, time.perf_counter() - t0)
        results[name] = (best, J, U)
        per_sweep = 1000.0 * best / args.steps
        print(f"{name:>6}: {best:8.3f}s total, {per_sweep:8.2f} ms/sweep")

    if len(results) == 2:
        (jn, un), (jj, uj) = [(results[k][1], results[k][2])
                              for k in ("numpy", "numba")]
        identical = np.array_equal(jn, jj) and np.array_equal(un, uj)
        print(f"outputs bit-identical: {identical}")
        speedup = results["numpy"][0] / results["numba"][0]
        print(f"numba speedup: {speedup:.1f}x")
        if not identical:
            raise SystemExit("kernel outputs diverged")


if __name__ == "__main__":
    main()
