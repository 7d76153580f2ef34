"""Rectilinear augmented-state grids and multilinear interpolation.

The computational substrate for value iteration: per-dimension state axes,
a running-maximum axis on [0, c_bar], an action axis, and a dual-parameter
axis. Tables are stored flat as ``(n_xnodes, n_z)`` with the state index
row-major over the state axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

__all__ = ["AugmentedGrid", "locate", "locate_batch", "interp_xz"]


def locate(axis: np.ndarray, v: float):
    """Bracket ``v`` on a sorted axis: (lower index, fraction in [0, 1]).

    The fraction is exactly 0.0 when ``v`` sits on a node, so interpolating
    at a node reproduces the stored value bit-exactly. Values outside the
    axis clamp to the ends.
    """
    n = axis.size
    if n == 1:
        return 0, 0.0
    if v <= axis[0]:
        return 0, 0.0
    if v >= axis[-1]:
        return n - 2, 1.0
    idx = int(np.searchsorted(axis, v, side="right")) - 1
    idx = min(idx, n - 2)
    frac = (v - axis[idx]) / (axis[idx + 1] - axis[idx])
    return idx, float(frac)


def locate_batch(axis: np.ndarray, v: np.ndarray):
    """Vectorized ``locate`` over an array of query values."""
    v = np.asarray(v, dtype=np.float64)
    n = axis.size
    if n == 1:
        return np.zeros(v.shape, dtype=np.int64), np.zeros(v.shape)
    idx = np.searchsorted(axis, v, side="right") - 1
    idx = np.clip(idx, 0, n - 2).astype(np.int64)
    frac = (v - axis[idx]) / (axis[idx + 1] - axis[idx])
    frac = np.where(v <= axis[0], 0.0, frac)
    frac = np.where(v >= axis[-1], 1.0, frac)
    return idx, frac


@dataclass(frozen=True)
class AugmentedGrid:
    """Node axes for the augmented state (x, z), the actions, and s.

    ``x_axes`` is one strictly increasing array per state dimension; the
    ``z_axis`` and ``s_axis`` live on [0, c_bar]. Axes may be nonuniform
    (the exact-oracle grids use the reachable value sets directly).
    """

    x_axes: Tuple[np.ndarray, ...]
    z_axis: np.ndarray
    action_axis: np.ndarray
    s_axis: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(ax, dtype=np.float64) for ax in self.x_axes)
        object.__setattr__(self, "x_axes", axes)
        for name in ("z_axis", "action_axis", "s_axis"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for ax in axes + (self.z_axis, self.action_axis, self.s_axis):
            if ax.ndim != 1 or ax.size < 1:
                raise ValueError("grid axes must be nonempty 1-d arrays")
            if ax.size > 1 and not np.all(np.diff(ax) > 0):
                raise ValueError("grid axes must be strictly increasing")
        if self.z_axis.size < 2:
            raise ValueError("z axis needs at least 2 nodes")
        # Row-major strides over the state axes and the cached node list.
        shape = tuple(ax.size for ax in axes)
        strides = np.ones(len(shape), dtype=np.int64)
        for d in range(len(shape) - 2, -1, -1):
            strides[d] = strides[d + 1] * shape[d + 1]
        object.__setattr__(self, "_x_shape", shape)
        object.__setattr__(self, "_x_strides", strides)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        object.__setattr__(self, "_x_nodes", nodes)

    @classmethod
    def uniform(cls, model, x_counts, z_count: int, action_count: int, s_count: int):
        """Uniform axes spanning the model bounds; z and s cover [0, c_bar].

        Every count must be at least 2, and the z/s axes include 0 and c_bar
        exactly (linspace endpoints).
        """
        x_counts = tuple(int(c) for c in np.atleast_1d(x_counts))
        if len(x_counts) != model.state_dim:
            raise ValueError("one x count per state dimension required")
        if min(x_counts) < 2 or min(z_count, action_count, s_count) < 2:
            raise ValueError("grid counts must be >= 2")
        x_axes = tuple(
            np.linspace(lo, hi, c)
            for (lo, hi), c in zip(model.state_bounds, x_counts)
        )
        return cls(
            x_axes=x_axes,
            z_axis=np.linspace(0.0, model.c_bar, int(z_count)),
            action_axis=np.linspace(*model.action_bounds, int(action_count)),
            s_axis=np.linspace(0.0, model.c_bar, int(s_count)),
        )

    @property
    def state_dim(self) -> int:
        return len(self.x_axes)

    @property
    def n_xnodes(self) -> int:
        return int(np.prod(self._x_shape))

    @property
    def x_shape(self):
        return self._x_shape

    def x_nodes(self) -> np.ndarray:
        """All state nodes as an (n_xnodes, state_dim) array, row-major."""
        return self._x_nodes

    def flat_x_index(self, multi_idx) -> int:
        return int(np.dot(np.asarray(multi_idx, dtype=np.int64), self._x_strides))

    def nearest_x_index(self, x):
        """Flat index of the state node nearest to x (ties go to the lower node)."""
        x = np.asarray(x, dtype=np.float64)
        batch = x.ndim > 1
        pts = np.atleast_2d(x)
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        for d, ax in enumerate(self.x_axes):
            flat += self._nearest_on_axis(ax, pts[:, d]) * self._x_strides[d]
        return flat if batch else int(flat[0])

    def nearest_z_index(self, z):
        z = np.asarray(z, dtype=np.float64)
        idx = self._nearest_on_axis(self.z_axis, np.atleast_1d(z))
        return idx if z.ndim else int(idx[0])

    @staticmethod
    def _nearest_on_axis(axis: np.ndarray, v: np.ndarray) -> np.ndarray:
        if axis.size == 1:
            return np.zeros(v.shape, dtype=np.int64)
        hi = np.clip(np.searchsorted(axis, v, side="left"), 0, axis.size - 1)
        lo = np.maximum(hi - 1, 0)
        pick_hi = (axis[hi] - v) < (v - axis[lo])
        return np.where(pick_hi, hi, lo).astype(np.int64)


def interp_xz(grid: AugmentedGrid, table: np.ndarray, x, z: float) -> float:
    """Multilinear interpolation of a flat (n_xnodes, n_z) table at one point."""
    x = np.asarray(x, dtype=np.float64).ravel()
    kz, fz = locate(grid.z_axis, float(z))
    locs = [locate(ax, x[d]) for d, ax in enumerate(grid.x_axes)]
    strides = grid._x_strides
    total = 0.0
    for corner in range(1 << grid.state_dim):
        wt = 1.0
        flat = 0
        for d, (idx, frac) in enumerate(locs):
            if corner >> d & 1:
                wt *= frac
                flat += min(idx + 1, grid.x_axes[d].size - 1) * strides[d]
            else:
                wt *= 1.0 - frac
                flat += idx * strides[d]
        if wt == 0.0:
            continue
        lo = table[flat, kz]
        if fz > 0.0:
            lo = (1.0 - fz) * lo + fz * table[flat, kz + 1]
        total += wt * lo
    return float(total)
