"""Tests of the exact tiny-instance verifiers themselves."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cvarsafe import (AugmentedGrid, OracleError, OracleSizeError, Pmf,
                      TinyInstance, exact_optimal_cvar,
                      exact_optimal_cvar_history, exact_policy_cvar,
                      exchange_identity_value, expectation_dp, generate_corpus,
                      load_corpus, make_stormwater_model, random_instance,
                      save_corpus)
from cvarsafe.oracle import _excess_dp


def two_state_instance():
    """Deterministic transitions, one noisy action; horizon 1."""
    return TinyInstance(
        states=np.array([0.0, 1.0]),
        actions=np.array([0.0, 1.0]),
        cost=np.array([[0.0, 0.5], [1.0, 1.0]]),
        terminal=np.array([0.0, 2.0]),
        probs=np.array([[[0.5, 0.5], [1.0, 0.0]],
                        [[0.5, 0.5], [1.0, 0.0]]]),
        next_idx=np.array([[[0, 1], [0, 0]],
                           [[0, 1], [1, 1]]]),
        horizon=1,
        c_bar=2.0,
        x0=0,
    )


class TestExactPolicyCvar:
    def test_deterministic_point_mass(self):
        inst = two_state_instance()
        # action 1 from state 0 goes to state 0 surely: Y = max(0.5, 0) = 0.5
        policy = {(0, 0, 0.0): 1}
        for alpha in (0.05, 0.5, 1.0):
            assert exact_policy_cvar(inst, policy, alpha) == 0.5

    def test_two_branch_hand_computation(self):
        inst = two_state_instance()
        # action 0: half to state 0 (Y = 0), half to state 1 (Y = 2)
        policy = {(0, 0, 0.0): 0}
        assert exact_policy_cvar(inst, policy, 1.0) == 1.0     # mean
        assert exact_policy_cvar(inst, policy, 0.5) == 2.0     # worst half
        assert exact_policy_cvar(inst, policy, 0.25) == 2.0

    def test_alpha_one_is_expected_max_cost(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            inst = random_instance(rng, max_policies=200)
            result = exact_optimal_cvar(inst, 1.0)
            assert_allclose(result.value, _excess_dp(inst, 0.0), atol=1e-9)

    def test_unreachable_entry_raises(self):
        inst = two_state_instance()
        with pytest.raises(OracleError):
            exact_policy_cvar(inst, {}, 0.5)


class TestExactOptimalCvar:
    def test_single_action_equals_policy_value(self):
        rng = np.random.default_rng(21)
        while True:
            inst = random_instance(rng, max_policies=50)
            if inst.n_actions == 1:
                break
        res = exact_optimal_cvar(inst, 0.3)
        assert res.value == exact_policy_cvar(inst, res.policy, 0.3)

    def test_picks_the_safe_action(self):
        inst = two_state_instance()
        res = exact_optimal_cvar(inst, 0.25)
        # deterministic action 1 (cost 0.5) beats the risky action 0 (CVaR 2)
        assert res.value == 0.5
        assert res.policy[(0, 0, 0.0)] == 1

    def test_exchange_identity_on_corpus(self):
        rng = np.random.default_rng(33)
        for _ in range(15):
            inst = random_instance(rng, max_policies=800)
            for alpha in (0.1, 0.5, 1.0):
                res = exact_optimal_cvar(inst, alpha)
                assert abs(res.value - res.exchange_value) <= 1e-9
                assert res.exchange_value == exchange_identity_value(inst, alpha)

    def test_budget_error(self):
        rng = np.random.default_rng(4)
        while True:
            inst = random_instance(rng, max_policies=4000)
            if inst.policy_count() > 64:
                break
        with pytest.raises(OracleSizeError):
            exact_optimal_cvar(inst, 0.5, budget=64)


class TestHistoryPolicies:
    def test_history_never_beats_augmented_feedback(self):
        rng = np.random.default_rng(77)
        checked = 0
        while checked < 12:
            inst = random_instance(rng, max_policies=800)
            if inst.horizon > 2:
                continue
            checked += 1
            for alpha in (0.2, 0.7, 1.0):
                feedback = exact_optimal_cvar(inst, alpha).value
                history = exact_optimal_cvar_history(inst, alpha)
                assert abs(history - feedback) <= 1e-9

    def test_horizon_three_rejected(self):
        rng = np.random.default_rng(6)
        while True:
            inst = random_instance(rng)
            if inst.horizon == 3:
                break
        with pytest.raises(ValueError):
            exact_optimal_cvar_history(inst, 0.5)


class TestReachability:
    def test_z_values_stay_in_cost_closure(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            inst = random_instance(rng, max_policies=500)
            allowed = {0.0} | {float(c) for c in inst.cost.ravel()}
            for layer in inst.reachable_nodes():
                for _, z in layer:
                    assert z in allowed

    def test_policy_count_matches_layer_sizes(self):
        inst = two_state_instance()
        layers = inst.reachable_nodes()
        assert layers[0] == [(0, 0.0)]
        nodes = sum(len(l) for l in layers[:-1])
        assert inst.policy_count() == inst.n_actions ** nodes


class TestSerialization:
    def test_round_trip(self, tmp_path):
        instances = generate_corpus(seed=1, count=4)
        path = tmp_path / "corpus.json"
        save_corpus(path, instances)
        back = load_corpus(path)
        assert len(back) == 4
        for a, b in zip(instances, back):
            assert np.array_equal(a.cost, b.cost)
            assert np.array_equal(a.next_idx, b.next_idx)
            assert np.array_equal(a.probs, b.probs)
            assert a.horizon == b.horizon and a.x0 == b.x0

    def test_corrupted_file_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schema": 1,\n "instances": [}\n')
        with pytest.raises(ValueError) as err:
            load_corpus(path)
        assert "line 2" in str(err.value)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "short.json"
        path.write_text('{"schema": 1, "instances": [{"states": [0.0]}]}\n')
        with pytest.raises(ValueError):
            load_corpus(path)

    def test_not_a_corpus(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"something": []}\n')
        with pytest.raises(ValueError):
            load_corpus(path)


class TestExpectationDp:
    def test_matches_exact_dp_on_tiny_instances(self):
        # dual route: the scipy-interpolated grid DP must reproduce the
        # dict-based exact DP when every transition lands on a node
        rng = np.random.default_rng(30)
        checked = 0
        while checked < 8:
            inst = random_instance(rng, max_policies=500)
            if inst.n_states < 2:
                continue
            checked += 1
            model, grid = inst.to_model_and_grid()
            values = expectation_dp(model, grid)
            assert_allclose(values[inst.x0], _excess_dp(inst, 0.0), atol=1e-12)

    def test_no_inflow_keeps_desired_region_costless(self):
        # state-independent disturbance exercises the vectorized branch;
        # without inflow, levels never rise, so nodes inside the desired box
        # can never incur cost
        model = make_stormwater_model(disturbance=Pmf([0.0], [1.0]))
        grid = AugmentedGrid.uniform(model, (6, 6), 4, 3, 3)
        values = expectation_dp(model, grid)
        nodes = grid.x_nodes()
        safe = (nodes[:, 0] <= 3.0) & (nodes[:, 1] <= 4.0)
        assert np.all(values[safe] == 0.0)
        assert values.max() > 0.5

