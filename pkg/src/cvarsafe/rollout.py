"""Pre-commitment policy deployment and Monte Carlo validation.

A policy is synthesized for one (initial state, risk level) pair: the
minimizing dual parameter is read off the risk surface at the node nearest
the initial state, value iteration is re-solved at exactly that parameter,
and the resulting argmin tables drive the rollouts.

Rollouts are vectorized over the batch. Each rollout draws its disturbances
from its own row of a (num, horizon) uniform matrix seeded once, so row l
is a deterministic function of (seed, l, horizon): results do not depend on
batch splitting or thread counts, and reruns are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cvar import Pmf, cvar_tail, var
from .dp import PolicyTable, ValueTable, backup_q, value_iteration
from .grids import AugmentedGrid
from .models import SystemModel
from .solver import DualSweep, risk_value

__all__ = ["PrecommitmentPolicy", "RolloutBatch", "synthesize_policy",
           "rollout", "estimate_risk"]


@dataclass(frozen=True)
class PrecommitmentPolicy:
    """Deployment package: dual parameter fixed up front plus argmin tables."""

    alpha: float
    x0: np.ndarray
    s_star: float
    value_table: ValueTable
    policy_table: PolicyTable
    grid: AugmentedGrid

    @property
    def dp_value(self) -> float:
        """J_0 at the grid node nearest x0 and z = 0: the expected excess
        above s_star that the rollouts should reproduce."""
        node = self.grid.nearest_x_index(self.x0)
        return float(self.value_table.values[0][node, 0])


@dataclass(frozen=True)
class RolloutBatch:
    """Recorded trajectories; identical (seed, config) gives identical records."""

    seed: int
    states: np.ndarray   # (num, N + 1, state_dim)
    zs: np.ndarray       # (num, N + 1)
    actions: np.ndarray  # (num, N)
    shocks: np.ndarray   # (num, N)
    y_prime: np.ndarray  # (num,) realized maximum costs (g_lower restored)

    @property
    def num(self) -> int:
        return self.states.shape[0]


def synthesize_policy(x0, alpha, dsweep: DualSweep, model: SystemModel,
                      grid: AugmentedGrid) -> PrecommitmentPolicy:
    """Fix s* at the node nearest x0 and re-solve value iteration there."""
    x0 = np.asarray(x0, dtype=np.float64)
    for d, (lo, hi) in enumerate(model.state_bounds):
        if not lo <= x0[d] <= hi:
            raise ValueError(f"x0[{d}]={x0[d]} outside bounds [{lo}, {hi}]")
    surface = risk_value(dsweep, alpha, model.g_lower)
    node = grid.nearest_x_index(x0)
    s_star = float(surface.s_star[node])
    vtable, ptable = value_iteration(s_star, model, grid)
    return PrecommitmentPolicy(float(alpha), x0, s_star, vtable, ptable, grid)


def _sample_disturbances(model: SystemModel, x, u, draws):
    """Inverse-CDF sampling of w per rollout at the current (x, u)."""
    static = model.static_disturbance
    if static is not None:
        cdf = np.cumsum(static.probs)
        idx = np.searchsorted(cdf, draws, side="right")
        return static.values[np.minimum(idx, len(static) - 1)]
    if model.disturbance_batch is not None:
        values, probs = model.disturbance_batch(x, u)
        cdf = np.cumsum(probs, axis=1)
        idx = np.minimum((cdf <= draws[:, None]).sum(axis=1), cdf.shape[1] - 1)
        return values[np.arange(values.shape[0]), idx]
    out = np.empty(draws.shape)
    for i in range(draws.shape[0]):
        pmf = model.disturbance_at(x[i], float(u[i]))
        cdf = np.cumsum(pmf.probs)
        idx = min(int(np.searchsorted(cdf, draws[i], side="right")), len(pmf) - 1)
        out[i] = pmf.values[idx]
    return out


def rollout(policy: PrecommitmentPolicy, num: int, seed: int,
            model: SystemModel, reoptimize: bool = False) -> RolloutBatch:
    """Deploy the policy for ``num`` seeded trajectories.

    Controls are looked up at the nearest (x, z) grid node; with
    ``reoptimize`` they are instead re-minimized pointwise through
    ``backup_q`` at the exact query point (slower, higher fidelity).
    """
    n = int(num)
    horizon = model.horizon
    dim = model.state_dim
    grid = policy.grid
    action_axis = grid.action_axis

    states = np.empty((n, horizon + 1, dim))
    zs = np.empty((n, horizon + 1))
    acts = np.empty((n, horizon))
    shocks = np.empty((n, horizon))
    if n == 0:
        return RolloutBatch(int(seed), states, zs, acts, shocks, np.empty(0))

    draws = np.random.default_rng(int(seed)).random((n, horizon))
    states[:, 0, :] = policy.x0
    zs[:, 0] = 0.0
    for t in range(horizon):
        x = states[:, t, :]
        z = zs[:, t]
        if reoptimize:
            j_next = policy.value_table.values[t + 1]
            u = np.empty(n)
            for i in range(n):
                _, u[i] = _reoptimized_action(x[i], z[i], policy.s_star,
                                              j_next, model, grid)
        else:
            ix = grid.nearest_x_index(x)
            jz = grid.nearest_z_index(z)
            u = action_axis[policy.policy_table.action_idx[t, ix, jz]]
        w = _sample_disturbances(model, x, u, draws[:, t])
        states[:, t + 1, :] = model.dynamics(x, u, w)
        zs[:, t + 1] = np.maximum(z, model.stage_cost(x, u))
        acts[:, t] = u
        shocks[:, t] = w
    y = np.maximum(zs[:, horizon], model.terminal_cost(states[:, horizon, :]))
    return RolloutBatch(int(seed), states, zs, acts, shocks, y + model.g_lower)


def _reoptimized_action(x, z, s, j_next, model, grid):
    best, best_u = np.inf, float(grid.action_axis[0])
    for u in grid.action_axis:
        q = backup_q(x, z, float(u), s, j_next, model, grid)
        if q < best:
            best, best_u = q, float(u)
    return best, best_u


def estimate_risk(batch: RolloutBatch, alpha, g_lower: float = 0.0,
                  s_star: float = None) -> dict:
    """Empirical risk statistics of the realized maximum costs.

    Builds the empirical pmf of Y' and evaluates VaR/CVaR through the risk
    functionals; ``excess_hat`` is the sample mean of max(Y' - g_lower - s, 0)
    at the policy's dual parameter together with its standard error.
    """
    if batch.num == 0:
        raise ValueError("empty rollout batch")
    a = float(alpha)
    dist = Pmf.from_samples(batch.y_prime)
    if a == 1.0:
        cvar_hat = dist.mean()
    else:
        cvar_hat = cvar_tail(dist, a)
    out = {
        "num": batch.num,
        "cvar_hat": float(cvar_hat),
        "var_hat": var(dist, a),
        "mean_hat": dist.mean(),
    }
    if s_star is not None:
        excess = np.maximum(batch.y_prime - g_lower - float(s_star), 0.0)
        out["excess_hat"] = float(excess.mean())
        out["excess_stderr"] = float(excess.std(ddof=1) / np.sqrt(batch.num)) \
            if batch.num > 1 else 0.0
    return out
