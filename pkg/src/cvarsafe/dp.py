"""Augmented-state value iteration for a fixed dual parameter.

Solves the backward recursion

    J_N(x, z) = max(max(c_N(x), z) - s, 0)
    J_t(x, z) = min_u  E_w[ J_{t+1}(f(x, u, w), max(z, c(x, u))) ]

on a rectilinear (x, z) grid, interpolating J_{t+1} multilinearly between
nodes. Transition geometry (interpolation corners, stage costs, disturbance
atoms) does not depend on s, so it is precomputed once and shared across a
whole dual-parameter sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import sweep_kernel
from .grids import AugmentedGrid, interp_xz, locate, locate_batch
from .models import SystemModel

__all__ = [
    "ValueTable",
    "PolicyTable",
    "TransitionTables",
    "precompute_transitions",
    "terminal_value",
    "backup_q",
    "bellman_min",
    "value_iteration",
    "write_tables_csv",
]


@dataclass(frozen=True)
class ValueTable:
    """J_t sampled on the grid for one dual parameter.

    ``values[t]`` is the flat (n_xnodes, n_z) table at time t in 0..N.
    Entries lie in [0, max(c_bar - s, 0)] and are nondecreasing along z.
    """

    s: float
    values: np.ndarray  # (N + 1, n_xnodes, n_z)


@dataclass(frozen=True)
class PolicyTable:
    """Argmin action indices per time and augmented-grid node.

    ``action_idx[t]`` is the flat (n_xnodes, n_z) index table at time t in
    0..N-1; indices point into the grid's action axis.
    """

    s: float
    action_idx: np.ndarray  # (N, n_xnodes, n_z), int64

    def actions(self, grid: AugmentedGrid) -> np.ndarray:
        return grid.action_axis[self.action_idx]


@dataclass(frozen=True)
class TransitionTables:
    """Precomputed, s-independent transition geometry for one (model, grid)."""

    cost: np.ndarray        # (n_x, n_u)
    probs: np.ndarray       # (n_x, n_u, n_w), zero-padded
    corner_idx: np.ndarray  # (n_x, n_u, n_w, n_corners), int64
    corner_wt: np.ndarray   # (n_x, n_u, n_w, n_corners)
    cz_idx: np.ndarray      # (n_x, n_u), int64
    cz_frac: np.ndarray     # (n_x, n_u)
    terminal: np.ndarray    # (n_x,)


def _gather_disturbances(model: SystemModel, nodes: np.ndarray, actions: np.ndarray):
    """Atom values and probabilities per (node, action), padded to max width."""
    static = model.static_disturbance
    n_x, n_u = nodes.shape[0], actions.size
    if static is not None:
        n_w = len(static)
        w_vals = np.broadcast_to(static.values, (n_x, n_u, n_w)).copy()
        probs = np.broadcast_to(static.probs, (n_x, n_u, n_w)).copy()
        return w_vals, probs
    pmfs = [[model.disturbance_at(nodes[i], actions[j]) for j in range(n_u)]
            for i in range(n_x)]
    n_w = max(len(p) for row in pmfs for p in row)
    w_vals = np.zeros((n_x, n_u, n_w))
    probs = np.zeros((n_x, n_u, n_w))
    for i in range(n_x):
        for j in range(n_u):
            p = pmfs[i][j]
            w_vals[i, j, : len(p)] = p.values
            w_vals[i, j, len(p):] = p.values[0]  # pad with a valid atom
            probs[i, j, : len(p)] = p.probs
    return w_vals, probs


def precompute_transitions(model: SystemModel, grid: AugmentedGrid) -> TransitionTables:
    """Evaluate dynamics, costs, and interpolation corners on the grid.

    Raises if a stage cost leaves [0, c_bar] or a next state leaves the grid
    box after the model's own clipping: both indicate a model bug rather than
    a condition to paper over.
    """
    nodes = grid.x_nodes()
    actions = grid.action_axis
    n_x, n_u = nodes.shape[0], actions.size
    dim = grid.state_dim

    cost = np.asarray(model.stage_cost(nodes[:, None, :], actions[None, :]),
                      dtype=np.float64)
    cost = np.broadcast_to(cost, (n_x, n_u)).copy()
    if cost.min() < 0.0 or cost.max() > model.c_bar:
        raise ValueError(
            f"stage costs must lie in [0, {model.c_bar}], got range "
            f"[{cost.min()}, {cost.max()}]")

    w_vals, probs = _gather_disturbances(model, nodes, actions)
    n_w = w_vals.shape[2]
    nxt = np.asarray(
        model.dynamics(nodes[:, None, None, :], actions[None, :, None], w_vals),
        dtype=np.float64)
    nxt = np.broadcast_to(nxt, (n_x, n_u, n_w, dim))

    idxs, fracs = [], []
    for d, ax in enumerate(grid.x_axes):
        coord = nxt[..., d]
        if coord.min() < ax[0] or coord.max() > ax[-1]:
            raise RuntimeError(
                f"transition left the grid along dimension {d}: "
                f"[{coord.min()}, {coord.max()}] vs [{ax[0]}, {ax[-1]}]")
        idx, frac = locate_batch(ax, coord)
        idxs.append(idx)
        fracs.append(frac)

    n_corners = 1 << dim
    strides = grid._x_strides
    corner_idx = np.zeros((n_x, n_u, n_w, n_corners), dtype=np.int64)
    corner_wt = np.ones((n_x, n_u, n_w, n_corners))
    for c in range(n_corners):
        for d in range(dim):
            size = grid.x_axes[d].size
            if c >> d & 1:
                corner_wt[..., c] *= fracs[d]
                corner_idx[..., c] += np.minimum(idxs[d] + 1, size - 1) * strides[d]
            else:
                corner_wt[..., c] *= 1.0 - fracs[d]
                corner_idx[..., c] += idxs[d] * strides[d]

    cz_idx, cz_frac = locate_batch(grid.z_axis, cost)
    terminal = np.asarray(model.terminal_cost(nodes), dtype=np.float64)
    if terminal.min() < 0.0 or terminal.max() > model.c_bar:
        raise ValueError("terminal costs must lie in [0, c_bar]")
    return TransitionTables(cost, probs, corner_idx, corner_wt,
                            cz_idx.astype(np.int64), cz_frac, terminal)


def terminal_value(x, z, s, model: SystemModel):
    """Horizon cost max(max(c_N(x), z) - s, 0)."""
    c_n = model.terminal_cost(np.asarray(x, dtype=np.float64))
    return np.maximum(np.maximum(c_n, z) - s, 0.0)


def backup_q(x, z, u, s, J_next, model: SystemModel, grid: AugmentedGrid) -> float:
    """Expected interpolated continuation value for one (x, z, u).

    ``J_next`` is a flat (n_xnodes, n_z) table for the dual parameter ``s``
    (s itself enters only through that table). This pointwise path is used
    for tests and for local policy re-optimization; the swept path in
    ``value_iteration`` goes through the precomputed kernels.
    """
    x = np.asarray(x, dtype=np.float64)
    pmf = model.disturbance_at(x, u)
    c = float(model.stage_cost(x, u))
    if not 0.0 <= c <= model.c_bar:
        raise ValueError(f"stage cost {c} outside [0, {model.c_bar}]")
    z_next = max(float(z), c)
    total = 0.0
    for w, p in zip(pmf.values, pmf.probs):
        x_next = model.dynamics(x, u, w)
        total += p * interp_xz(grid, J_next, x_next, z_next)
    return total


def bellman_min(x, z, s, J_next, model: SystemModel, grid: AugmentedGrid):
    """Minimize ``backup_q`` over the action axis.

    Returns (value, action); ties resolve to the smallest grid action.
    """
    best = np.inf
    best_u = grid.action_axis[0]
    for u in grid.action_axis:
        q = backup_q(x, z, float(u), s, J_next, model, grid)
        if q < best:
            best = q
            best_u = float(u)
    return best, best_u


def value_iteration(s: float, model: SystemModel, grid: AugmentedGrid,
                    trans: TransitionTables = None):
    """Solve the full backward recursion for one dual parameter.

    Returns the (ValueTable, PolicyTable) pair over all time steps;
    ``values[0][:, 0]`` (the z = 0 column) is the swept value V^s on the
    state grid whenever the z axis starts at 0.
    """
    if trans is None:
        trans = precompute_transitions(model, grid)
    n_x, n_z = trans.terminal.size, grid.z_axis.size
    horizon = model.horizon
    values = np.empty((horizon + 1, n_x, n_z))
    action_idx = np.empty((horizon, n_x, n_z), dtype=np.int64)
    values[horizon] = np.maximum(
        np.maximum(trans.terminal[:, None], grid.z_axis[None, :]) - s, 0.0)
    J = values[horizon]
    for t in range(horizon - 1, -1, -1):
        J, U = sweep_kernel(J, grid.z_axis, trans.cost, trans.probs,
                            trans.corner_idx, trans.corner_wt,
                            trans.cz_idx, trans.cz_frac)
        values[t] = J
        action_idx[t] = U
    return ValueTable(float(s), values), PolicyTable(float(s), action_idx)


def write_tables_csv(path, vtable: ValueTable, ptable: PolicyTable,
                     grid: AugmentedGrid, config_hash: str = ""):
    """Serialize value/policy tables as CSV.

    Stable long format, one row per (t, state indices..., z index):
    ``t,i0,...,iz,value,action`` where ``action`` is the grid action value
    (empty at the terminal step, which has no policy).
    """
    dim = grid.state_dim
    shape = grid.x_shape
    n_z = grid.z_axis.size
    horizon = ptable.action_idx.shape[0]
    idx_cols = ",".join(f"i{d}" for d in range(dim))
    with open(path, "w") as fh:
        if config_hash:
            fh.write(f"# config={config_hash}\n")
        fh.write(f"# s={vtable.s!r}\n")
        fh.write(f"t,{idx_cols},iz,value,action\n")
        for t in range(horizon + 1):
            table = vtable.values[t]
            for flat in range(table.shape[0]):
                multi = np.unravel_index(flat, shape)
                prefix = ",".join(str(i) for i in multi)
                for jz in range(n_z):
                    if t < horizon:
                        act = repr(float(grid.action_axis[ptable.action_idx[t, flat, jz]]))
                    else:
                        act = ""
                    fh.write(f"{t},{prefix},{jz},{table[flat, jz]!r},{act}\n")
