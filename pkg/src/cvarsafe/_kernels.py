"""Backward Bellman sweep kernels.

One time step of value iteration over every (state node, running-max node)
pair is the hot loop of the solver. The default implementation is a numba
``@njit`` kernel (cached to disk, GIL released so dual-parameter solves can
run in real threads). Setting the environment variable ``CVARSAFE_NUMBA=0``
selects a pure-numpy fallback that produces bit-identical tables;
``benchmarks/bench_dp.py`` compares the two paths.

Inputs are the precomputed transition tables (see ``dp.precompute_transitions``):

  J_next      (n_x, n_z)            next-step value table
  z_axis      (n_z,)                running-max axis
  cost        (n_x, n_u)            stage cost per (state node, action)
  probs       (n_x, n_u, n_w)       disturbance atom probabilities (0-padded)
  corner_idx  (n_x, n_u, n_w, n_c)  flat state indices of interpolation corners
  corner_wt   (n_x, n_u, n_w, n_c)  multilinear corner weights
  cz_idx      (n_x, n_u)            z-axis bracket of the stage cost
  cz_frac     (n_x, n_u)            fractional position of the cost on z_axis

Outputs: the minimized value table (n_x, n_z) and the argmin action indices
(ties resolve to the lowest action index).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["sweep_kernel", "backend", "sweep_numpy"]


def sweep_numpy(J_next, z_axis, cost, probs, corner_idx, corner_wt, cz_idx, cz_frac):
    """Vectorized fallback sweep; bit-identical to the jitted kernel."""
    n_x, n_z = J_next.shape
    n_u = cost.shape[1]
    n_w = probs.shape[2]
    n_c = corner_idx.shape[3]
    best = np.full((n_x, n_z), np.inf)
    best_u = np.zeros((n_x, n_z), dtype=np.int64)
    cols = np.arange(n_z)
    for iu in range(n_u):
        on_node = z_axis[None, :] >= cost[:, iu, None]
        k = np.where(on_node, cols[None, :], cz_idx[:, iu, None])
        f = np.where(on_node, 0.0, cz_frac[:, iu, None])
        kp = np.minimum(k + 1, n_z - 1)
        q = np.zeros((n_x, n_z))
        for iw in range(n_w):
            v = np.zeros((n_x, n_z))
            for c in range(n_c):
                nodes = corner_idx[:, iu, iw, c][:, None]
                lo = J_next[nodes, k]
                hi = J_next[nodes, kp]
                v += corner_wt[:, iu, iw, c][:, None] * ((1.0 - f) * lo + f * hi)
            q += probs[:, iu, iw][:, None] * v
        improved = q < best
        best = np.where(improved, q, best)
        best_u = np.where(improved, np.int64(iu), best_u)
    return best, best_u


def _sweep_loops(J_next, z_axis, cost, probs, corner_idx, corner_wt, cz_idx, cz_frac):
    n_x, n_z = J_next.shape
    n_u = cost.shape[1]
    n_w = probs.shape[2]
    n_c = corner_idx.shape[3]
    J_out = np.empty((n_x, n_z))
    U_out = np.empty((n_x, n_z), dtype=np.int64)
    for ix in range(n_x):
        for jz in range(n_z):
            best = np.inf
            best_u = 0
            for iu in range(n_u):
                if z_axis[jz] >= cost[ix, iu]:
                    k = jz
                    f = 0.0
                else:
                    k = cz_idx[ix, iu]
                    f = cz_frac[ix, iu]
                kp = k + 1
                if kp > n_z - 1:
                    kp = n_z - 1
                q = 0.0
                for iw in range(n_w):
                    p = probs[ix, iu, iw]
                    if p == 0.0:
                        continue
                    v = 0.0
                    for c in range(n_c):
                        wt = corner_wt[ix, iu, iw, c]
                        if wt == 0.0:
                            continue
                        node = corner_idx[ix, iu, iw, c]
                        v += wt * ((1.0 - f) * J_next[node, k] + f * J_next[node, kp])
                    q += p * v
                if q < best:
                    best = q
                    best_u = iu
            J_out[ix, jz] = best
            U_out[ix, jz] = best_u
    return J_out, U_out


def _want_numba() -> bool:
    flag = os.environ.get("CVARSAFE_NUMBA", "").strip().lower()
    return flag not in ("0", "false", "no", "off")


_BACKEND = "numpy"
sweep_kernel = sweep_numpy

if _want_numba():
    try:
        from numba import njit

        sweep_kernel = njit(cache=True, nogil=True)(_sweep_loops)
        _BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def backend() -> str:
    """Active sweep implementation: 'numba' or 'numpy'."""
    return _BACKEND
