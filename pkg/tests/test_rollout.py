"""Policy synthesis and Monte Carlo rollout tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cvarsafe import (AugmentedGrid, Pmf, cvar_dual, estimate_risk,
                      generate_corpus, g_k, make_stormwater_model, risk_value,
                      rollout, smoke_disturbance, sweep, synthesize_policy)
from cvarsafe.models import design_params


def small_setup(disturbance=None):
    model = make_stormwater_model(design_params("a"),
                                  disturbance or smoke_disturbance())
    grid = AugmentedGrid.uniform(model, (9, 9), 5, 5, 5)
    return model, grid, sweep(model, grid)


class TestSynthesizePolicy:
    def test_s_star_read_from_surface(self):
        model, grid, ds = small_setup()
        alpha = 0.5
        surface = risk_value(ds, alpha, model.g_lower)
        x0 = np.array([2.5, 3.0])
        policy = synthesize_policy(x0, alpha, ds, model, grid)
        node = grid.nearest_x_index(x0)
        assert policy.s_star == surface.s_star[node]
        assert policy.value_table.s == policy.s_star
        assert policy.policy_table.s == policy.s_star
        assert policy.dp_value == float(policy.value_table.values[0][node, 0])

    def test_out_of_bounds_x0(self):
        model, grid, ds = small_setup()
        with pytest.raises(ValueError):
            synthesize_policy(np.array([9.0, 1.0]), 0.5, ds, model, grid)


class TestRollout:
    def test_seed_reproducibility(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([3.0, 3.5]), 0.5, ds, model, grid)
        b1 = rollout(policy, 500, seed=9, model=model)
        b2 = rollout(policy, 500, seed=9, model=model)
        assert np.array_equal(b1.states, b2.states)
        assert np.array_equal(b1.y_prime, b2.y_prime)
        b3 = rollout(policy, 500, seed=10, model=model)
        assert not np.array_equal(b1.shocks, b3.shocks)

    def test_rollout_prefix_stable_in_batch_size(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([3.0, 3.5]), 0.5, ds, model, grid)
        big = rollout(policy, 200, seed=3, model=model)
        small = rollout(policy, 50, seed=3, model=model)
        assert np.array_equal(big.states[:50], small.states)

    def test_degenerate_disturbance_identical_rollouts(self):
        model, grid, ds = small_setup(disturbance=Pmf([12.2], [1.0]))
        policy = synthesize_policy(np.array([2.0, 2.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 50, seed=0, model=model)
        assert np.all(batch.y_prime == batch.y_prime[0])
        assert np.all(batch.states == batch.states[0:1])

    def test_z_trace_recomputable(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([3.5, 4.5]), 0.25, ds, model, grid)
        batch = rollout(policy, 100, seed=5, model=model)
        for i in range(0, 100, 17):
            z = 0.0
            for t in range(model.horizon):
                assert batch.zs[i, t] == z
                z = max(z, float(model.stage_cost(batch.states[i, t],
                                                  batch.actions[i, t])))
            assert batch.zs[i, model.horizon] == z

    def test_y_prime_is_trajectory_max_elevation(self):
        model, grid, ds = small_setup()
        params = design_params("a")
        policy = synthesize_policy(np.array([4.0, 5.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 64, seed=1, model=model)
        expected = g_k(batch.states, params).max(axis=1)
        assert_allclose(batch.y_prime, expected, atol=1e-14)

    def test_zero_rollouts(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([2.0, 2.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 0, seed=0, model=model)
        assert batch.num == 0

    def test_reoptimized_controls_stay_on_action_grid(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([3.0, 4.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 4, seed=2, model=model, reoptimize=True)
        assert np.all(np.isin(batch.actions, grid.action_axis))


class TestEstimateRisk:
    def test_constant_outcomes(self):
        model, grid, ds = small_setup(disturbance=Pmf([12.2], [1.0]))
        policy = synthesize_policy(np.array([2.0, 2.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 30, seed=0, model=model)
        stats = estimate_risk(batch, 0.5, model.g_lower, policy.s_star)
        assert stats["cvar_hat"] == batch.y_prime[0]
        assert stats["var_hat"] == batch.y_prime[0]

    def test_two_value_batch_delegates_to_risk_functionals(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([3.0, 4.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 200, seed=7, model=model)
        stats = estimate_risk(batch, 0.5)
        pmf = Pmf.from_samples(batch.y_prime)
        assert stats["cvar_hat"] == pytest.approx(
            cvar_dual(pmf, 0.5)[0], abs=1e-10)

    def test_empty_batch_rejected(self):
        model, grid, ds = small_setup()
        policy = synthesize_policy(np.array([2.0, 2.0]), 0.5, ds, model, grid)
        batch = rollout(policy, 0, seed=0, model=model)
        with pytest.raises(ValueError):
            estimate_risk(batch, 0.5)


class TestMonteCarloConsistency:
    def test_oracle_instance_mean_excess_matches_dp(self):
        # exact-grid instance: the rollout mean of max(Y - s*, 0) estimates
        # J_0 with no interpolation bias
        inst = generate_corpus(seed=17, count=3)[1]
        model, grid = inst.to_model_and_grid()
        ds = sweep(model, grid)
        alpha = 0.3
        x0 = np.array([inst.states[inst.x0]])
        policy = synthesize_policy(x0, alpha, ds, model, grid)
        batch = rollout(policy, 200_000, seed=11, model=model)
        stats = estimate_risk(batch, alpha, model.g_lower, policy.s_star)
        gap = abs(stats["excess_hat"] - policy.dp_value)
        assert gap <= 3.0 * stats["excess_stderr"] + 1e-9
