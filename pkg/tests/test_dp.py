"""Value-iteration engine tests: terminal stage, backups, argmin, tables."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cvarsafe import (AugmentedGrid, Pmf, SystemModel, backup_q, bellman_min,
                      interp_xz, make_stormwater_model, precompute_transitions,
                      smoke_disturbance, terminal_value, value_iteration)
from cvarsafe.dp import write_tables_csv


def line_model(horizon=2, step=0.5, cost_scale=0.25,
               atoms=((0.1, 0.3), (0.6, 0.7)), c_bar=1.0):
    """1-d test system on [0, 2]: x' = clip(x + step*u + w), cost = scale*x."""
    dist = Pmf([a for a, _ in atoms], [p for _, p in atoms])

    def dyn(x, u, w):
        x = np.asarray(x, dtype=np.float64)
        nxt = np.clip(x[..., 0] + step * np.asarray(u) + np.asarray(w), 0.0, 2.0)
        return nxt[..., None]

    def cost(x, u):
        return cost_scale * np.asarray(x, dtype=np.float64)[..., 0]

    def tcost(x):
        return cost_scale * np.asarray(x, dtype=np.float64)[..., 0]

    return SystemModel(1, ((0.0, 2.0),), (0.0, 1.0), horizon, dyn, cost, tcost,
                       dist, c_bar, 0.0)


def line_grid():
    return AugmentedGrid(x_axes=(np.array([0.0, 1.0, 2.0]),),
                         z_axis=np.array([0.0, 0.5, 1.0]),
                         action_axis=np.array([0.0, 1.0]),
                         s_axis=np.array([0.0, 0.5, 1.0]))


class TestTerminalValue:
    MODEL = make_stormwater_model()

    def test_direct_evaluation(self):
        x = np.array([5.0, 6.0])  # terminal cost 2
        assert terminal_value(x, 1.0, 0.5, self.MODEL) == 1.5

    def test_zero_at_or_above_cbar(self):
        x = np.array([4.0, 5.0])
        for s in (2.0, 2.5):
            assert terminal_value(x, 1.9, s, self.MODEL) == 0.0

    def test_running_max_dominates(self):
        x = np.array([3.0, 4.0])  # terminal cost 0
        assert terminal_value(x, 1.2, 0.0, self.MODEL) == 1.2


class TestBackupQ:
    def test_degenerate_disturbance_is_exact_lookup(self):
        model = line_model(atoms=((0.5, 1.0),))
        grid = line_grid()
        rng = np.random.default_rng(0)
        J = rng.random((3, 3))
        x, z, u = np.array([1.0]), 0.0, 1.0
        # x' = 1 + 0.5 + 0.5 = 2 (a node), z' = max(0, 0.25) -> interpolated in z
        got = backup_q(x, z, u, 0.0, J, model, grid)
        expected = interp_xz(grid, J, np.array([2.0]), 0.25)
        assert got == expected

    def test_constant_table(self):
        model = line_model()
        grid = line_grid()
        J = np.full((3, 3), 0.42)
        for u in (0.0, 1.0):
            got = backup_q(np.array([0.5]), 0.1, u, 0.0, J, model, grid)
            assert_allclose(got, 0.42, rtol=1e-15)

    def test_two_atom_hand_computation(self):
        model = line_model()   # atoms 0.1 (p=.3), 0.6 (p=.7); cost(0.5) = 0.125
        grid = line_grid()
        rng = np.random.default_rng(1)
        J = rng.random((3, 3))
        got = backup_q(np.array([0.5]), 0.0, 1.0, 0.0, J, model, grid)
        # by hand: z' = 0.125 -> z bracket (0, fraction 0.25)
        def z_blend(row):
            return 0.75 * J[row, 0] + 0.25 * J[row, 1]
        # atom 0.1: x' = 1.1 -> nodes 1,2 with weights .9/.1
        v1 = 0.9 * z_blend(1) + 0.1 * z_blend(2)
        # atom 0.6: x' = 1.6 -> weights .4/.6
        v2 = 0.4 * z_blend(1) + 0.6 * z_blend(2)
        assert_allclose(got, 0.3 * v1 + 0.7 * v2, rtol=1e-14)

    def test_rejects_cost_outside_range(self):
        model = line_model(cost_scale=2.0)  # cost reaches 4 > c_bar = 1
        grid = line_grid()
        with pytest.raises(ValueError):
            backup_q(np.array([2.0]), 0.0, 0.0, 0.0, np.zeros((3, 3)), model, grid)


class TestBellmanMin:
    def test_single_action(self):
        model = line_model()
        grid = AugmentedGrid(x_axes=(np.array([0.0, 1.0, 2.0]),),
                             z_axis=np.array([0.0, 0.5, 1.0]),
                             action_axis=np.array([0.3]),
                             s_axis=np.array([0.0, 1.0]))
        J = np.ones((3, 3))
        value, action = bellman_min(np.array([1.0]), 0.0, 0.0, J, model, grid)
        assert action == 0.3
        assert value == backup_q(np.array([1.0]), 0.0, 0.3, 0.0, J, model, grid)

    def test_indifferent_actions_pick_lowest(self):
        # dynamics and cost ignore u entirely -> exact tie at every node
        model = line_model(step=0.0)
        grid = line_grid()
        _, ptable = value_iteration(0.0, model, grid)
        assert np.all(ptable.action_idx == 0)

    def test_dominating_action_wins(self):
        # u = 1 strictly lowers the next state, hence the terminal cost
        model = line_model(horizon=1, step=-1.0, cost_scale=0.0,
                           atoms=((0.0, 1.0),))
        model = SystemModel(**{**model.__dict__, "terminal_cost":
                               lambda x: 0.5 * np.asarray(x)[..., 0]})
        grid = line_grid()
        J = np.maximum(np.maximum(0.5 * grid.x_axes[0][:, None],
                                  grid.z_axis[None, :]) - 0.0, 0.0)
        value, action = bellman_min(np.array([1.0]), 0.0, 0.0, J, model, grid)
        assert action == 1.0
        assert value == 0.0


class TestValueIteration:
    def test_single_step_identity(self):
        # with on-node transitions the recursion reduces to a direct formula
        model = line_model(horizon=1, step=1.0, cost_scale=0.5,
                           atoms=((0.0, 0.25), (1.0, 0.75)), c_bar=1.0)
        grid = line_grid()
        for s in (0.0, 0.3, 1.0):
            vtable, _ = value_iteration(s, model, grid)
            for i, x in enumerate(grid.x_axes[0]):
                best = np.inf
                for u in grid.action_axis:
                    q = 0.0
                    for w, p in zip(*[(0.0, 1.0), (0.25, 0.75)]):
                        xn = min(max(x + u + w, 0.0), 2.0)
                        c = 0.5 * x
                        q += p * max(max(0.5 * xn, c) - s, 0.0)
                    best = min(best, q)
                assert_allclose(vtable.values[0][i, 0], best, atol=1e-12)

    def test_s_at_cbar_is_identically_zero(self):
        model = line_model()
        vtable, _ = value_iteration(1.0, model, line_grid())
        assert np.all(vtable.values == 0.0)

    def test_bounds_and_z_monotonicity(self):
        model = make_stormwater_model(disturbance=smoke_disturbance())
        grid = AugmentedGrid.uniform(model, (7, 7), 5, 3, 3)
        for s in (0.0, 1.0, 2.0):
            vtable, _ = value_iteration(s, model, grid)
            assert vtable.values.min() >= 0.0
            assert vtable.values.max() <= max(model.c_bar - s, 0.0) + 1e-12
            assert np.all(np.diff(vtable.values, axis=2) >= -1e-12)

    def test_s_monotone_and_one_lipschitz(self):
        model = make_stormwater_model(disturbance=smoke_disturbance())
        grid = AugmentedGrid.uniform(model, (7, 7), 5, 3, 5)
        trans = precompute_transitions(model, grid)
        prev = None
        for s in grid.s_axis:
            vtable, _ = value_iteration(float(s), model, grid, trans)
            if prev is not None:
                drop = prev - vtable.values
                assert drop.min() >= -1e-12
                assert drop.max() <= 0.5 + 1e-12  # s spacing
            prev = vtable.values

    def test_kernel_matches_pointwise_backup(self):
        # the jitted sweep and the scalar interp path must agree bit-for-bit
        model = make_stormwater_model(disturbance=smoke_disturbance())
        grid = AugmentedGrid.uniform(model, (5, 5), 4, 3, 3)
        vtable, ptable = value_iteration(0.5, model, grid)
        nodes = grid.x_nodes()
        J_next = vtable.values[1]
        for flat in range(0, grid.n_xnodes, 3):
            for jz in range(grid.z_axis.size):
                value, action = bellman_min(nodes[flat], float(grid.z_axis[jz]),
                                            0.5, J_next, model, grid)
                assert value == vtable.values[0][flat, jz]
                assert action == grid.action_axis[ptable.action_idx[0, flat, jz]]

    def test_interpolation_consistency_at_nodes(self):
        model = line_model()
        grid = line_grid()
        vtable, _ = value_iteration(0.25, model, grid)
        for t in range(model.horizon + 1):
            for i, x in enumerate(grid.x_axes[0]):
                for jz, z in enumerate(grid.z_axis):
                    got = interp_xz(grid, vtable.values[t],
                                    np.array([x]), float(z))
                    assert got == vtable.values[t][i, jz]


class TestTableSerialization:
    def test_csv_layout(self, tmp_path):
        model = line_model(horizon=2)
        grid = line_grid()
        vtable, ptable = value_iteration(0.0, model, grid)
        path = tmp_path / "tables.csv"
        write_tables_csv(path, vtable, ptable, grid, config_hash="deadbeef")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config=deadbeef"
        assert lines[2] == "t,i0,iz,value,action"
        # (N + 1) time layers x 3 states x 3 z nodes
        assert len(lines) == 3 + 3 * 3 * 3
        last = lines[-1].split(",")
        assert last[0] == "2" and last[-1] == ""  # terminal rows carry no action
