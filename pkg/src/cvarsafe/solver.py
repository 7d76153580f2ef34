"""Dual-parameter sweep, outer minimization, and safe-set extraction.

The pipeline:

  1. solve value iteration for every s on the grid's s axis and collect the
     z = 0 slice of J_0 (the ``DualSweep``),
  2. per state node, minimize s + V^s(x) / alpha over the s axis
     (the ``RiskSurface``: optimal value, its shift by g_lower, argmin s),
  3. threshold the surface at r to get the boolean ``SafeSetMask``.

Dual-parameter solves are independent, so the sweep can run on a thread
pool; the jitted sweep kernel releases the GIL. Results are assembled by
index, so outputs do not depend on the worker count.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dp import precompute_transitions, value_iteration
from .grids import AugmentedGrid
from .models import SystemModel

__all__ = ["DualSweep", "RiskSurface", "SafeSetMask", "sweep", "risk_value",
           "extract_safe_set"]


@dataclass(frozen=True)
class DualSweep:
    """V^s(x) = J_0^s(x, 0) for every s on the sweep axis.

    ``v0[i, j]`` is the value at s_values[i] and flat state node j. Rows are
    nonincreasing in s, the row at s = c_bar is identically zero, and every
    column is 1-Lipschitz in s.
    """

    s_values: np.ndarray  # (n_s,)
    v0: np.ndarray        # (n_s, n_xnodes)


@dataclass(frozen=True)
class RiskSurface:
    """Optimal risk value per state node at one risk level.

    ``v_star`` minimizes s + V^s(x) / alpha over the swept s values;
    ``w_star = g_lower + v_star`` restores the original cost offset;
    ``s_star`` is the smallest minimizing dual parameter per node.
    """

    alpha: float
    v_star: np.ndarray
    w_star: np.ndarray
    s_star: np.ndarray


@dataclass(frozen=True)
class SafeSetMask:
    """Boolean sub-level set mask: node is in the set iff w_star <= r."""

    alpha: float
    r: float
    mask: np.ndarray

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.mask))


def sweep(model: SystemModel, grid: AugmentedGrid, threads: int = 1,
          progress: bool = False) -> DualSweep:
    """Run value iteration for every dual parameter on the s axis.

    The z axis must start at 0 (the sweep reads the z = 0 column of J_0).
    ``threads`` bounds the worker count; any count yields identical output.
    """
    if grid.z_axis[0] != 0.0:
        raise ValueError("sweep requires a z axis starting at 0")
    trans = precompute_transitions(model, grid)
    s_values = grid.s_axis
    v0 = np.empty((s_values.size, grid.n_xnodes))

    def solve_one(i: int):
        vtable, _ = value_iteration(float(s_values[i]), model, grid, trans)
        v0[i] = vtable.values[0][:, 0]
        if progress:
            print(f"  solved s={s_values[i]:g} ({i + 1}/{s_values.size})",
                  file=sys.stderr, flush=True)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(solve_one, range(s_values.size)))
    else:
        for i in range(s_values.size):
            solve_one(i)
    return DualSweep(s_values.copy(), v0)


def risk_value(dsweep: DualSweep, alpha, g_lower: float = 0.0) -> RiskSurface:
    """Outer minimization over the swept dual parameters.

    Per node, minimizes s + V^s(x) / alpha over the s axis and records the
    smallest minimizing s. ``g_lower`` is the model's cost offset (0 for the
    stormwater designs), added once to produce w_star.
    """
    a = float(alpha)
    if not 0.0 < a <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")
    objective = dsweep.s_values[:, None] + dsweep.v0 / a
    best = np.argmin(objective, axis=0)  # first occurrence = smallest s
    cols = np.arange(dsweep.v0.shape[1])
    v_star = objective[best, cols]
    s_star = dsweep.s_values[best]
    return RiskSurface(a, v_star, v_star + g_lower, s_star)


def extract_safe_set(surface: RiskSurface, r: float) -> SafeSetMask:
    """Exact sub-level comparison w_star <= r (no tolerance)."""
    return SafeSetMask(surface.alpha, float(r), surface.w_star <= float(r))
