import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_mdp, random_policy, swap_chain
from pidrl.mdp import (
    TabularMdp,
    bellman_control,
    bellman_pe,
    bellman_residual_control,
    bellman_residual_pe,
    check_policy,
    deterministic_policy,
    exact_value_control,
    exact_value_pe,
    expected_reward,
    greedy_policy,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    policy_kernel,
    reward_variance,
    sample_transition,
    save_mdp,
    uniform_policy,
)

mdp_params = st.tuples(st.integers(1, 6), st.integers(1, 3), st.floats(0.0, 0.99), st.integers(0, 2**31))


def _build(params):
    n, m, gamma, seed = params
    rng = np.random.default_rng(seed)
    return random_mdp(rng, n, m, gamma), random_policy(rng, n, m), rng


class TestConstruction:
    def test_shapes_and_properties(self):
        mdp = swap_chain()
        assert (mdp.n_states, mdp.n_actions) == (2, 1)
        np.testing.assert_array_equal(mdp.mean_reward, [[0.0], [1.0]])
        assert mdp.reward_range == (0.0, 1.0)

    def test_arrays_are_read_only(self):
        mdp = swap_chain()
        with pytest.raises(ValueError):
            mdp.P[0, 0, 0] = 0.5

    @pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
    def test_rejects_bad_gamma(self, gamma):
        with pytest.raises(ValueError, match="gamma"):
            TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), gamma)

    def test_rejects_unnormalized_rows(self):
        P = np.full((2, 1, 2), 0.6)
        with pytest.raises(ValueError, match="sum to 1"):
            TabularMdp(P, np.zeros_like(P), 0.5)

    def test_rejects_negative_probabilities(self):
        P = np.array([[[1.5, -0.5]], [[0.0, 1.0]]])
        with pytest.raises(ValueError, match="nonnegative"):
            TabularMdp(P, np.zeros_like(P), 0.5)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            TabularMdp(np.ones((2, 1, 1)), np.zeros((2, 1, 1)), 0.5)
        with pytest.raises(ValueError, match="rewards"):
            TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 2, 1)), 0.5)

    def test_rejects_non_finite_reward(self):
        with pytest.raises(ValueError, match="finite"):
            TabularMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), np.nan), 0.5)

    def test_theory_mode_reward_range(self):
        TabularMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), 0.5), 0.5, theory_mode=True)
        with pytest.raises(ValueError, match="theory_mode"):
            TabularMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), -1.0), 0.5, theory_mode=True)


class TestPolicies:
    def test_check_policy_rejects_bad_rows(self):
        mdp = swap_chain()
        with pytest.raises(ValueError):
            check_policy(mdp, np.array([[0.5], [1.0]]))
        with pytest.raises(ValueError):
            check_policy(mdp, np.ones((3, 1)))

    def test_deterministic_and_uniform(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.9)
        np.testing.assert_array_equal(deterministic_policy(mdp, 2).argmax(axis=1), [2, 2, 2, 2])
        np.testing.assert_allclose(uniform_policy(mdp), 1.0 / 3)

    def test_greedy_ties_lowest_index(self):
        Q = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
        np.testing.assert_array_equal(greedy_policy(Q), [[1, 0, 0], [0, 1, 0]])


class TestOperators:
    def test_hand_solved_swap_chain(self):
        # V0 = 0 + 0.5 V1, V1 = 1 + 0.5 V0  =>  V0 = 2/3, V1 = 4/3
        mdp = swap_chain()
        V = exact_value_pe(mdp, np.ones((2, 1)))
        np.testing.assert_allclose(V, [2 / 3, 4 / 3], atol=1e-14)
        np.testing.assert_allclose(bellman_pe(mdp, np.ones((2, 1)), np.zeros(2)), [0.0, 1.0])

    def test_expected_reward_weights_actions(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.9)
        pi = random_policy(rng, 3, 2)
        manual = [sum(pi[x, a] * mdp.P[x, a] @ mdp.R[x, a] for a in range(2)) for x in range(3)]
        np.testing.assert_allclose(expected_reward(mdp, pi), manual, atol=1e-14)

    def test_shape_check(self):
        with pytest.raises(ValueError, match="shape"):
            bellman_pe(swap_chain(), np.ones((2, 1)), np.zeros(3))

    @given(mdp_params)
    @settings(max_examples=60, deadline=None)
    def test_policy_kernel_rows_sum_to_one(self, params):
        mdp, pi, _ = _build(params)
        K = policy_kernel(mdp, pi)
        assert np.max(np.abs(K.sum(axis=1) - 1.0)) <= 1e-12
        assert np.all(K >= 0)

    @given(mdp_params, st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_bellman_pe_is_affine(self, params, lam):
        mdp, pi, rng = _build(params)
        V1, V2 = rng.normal(size=(2, mdp.n_states)) * 10
        lhs = bellman_pe(mdp, pi, lam * V1 + (1 - lam) * V2)
        rhs = lam * bellman_pe(mdp, pi, V1) + (1 - lam) * bellman_pe(mdp, pi, V2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    @given(mdp_params)
    @settings(max_examples=60, deadline=None)
    def test_bellman_pe_contraction(self, params):
        mdp, pi, rng = _build(params)
        V1, V2 = rng.normal(size=(2, mdp.n_states)) * 10
        lhs = np.max(np.abs(bellman_pe(mdp, pi, V1) - bellman_pe(mdp, pi, V2)))
        assert lhs <= mdp.gamma * np.max(np.abs(V1 - V2)) + 1e-12

    @given(mdp_params)
    @settings(max_examples=60, deadline=None)
    def test_bellman_control_monotone_and_contraction(self, params):
        mdp, _, rng = _build(params)
        Q1 = rng.normal(size=(mdp.n_states, mdp.n_actions))
        Q2 = Q1 + np.abs(rng.normal(size=Q1.shape))
        T1, T2 = bellman_control(mdp, Q1), bellman_control(mdp, Q2)
        assert np.all(T1 <= T2 + 1e-12)
        assert np.max(np.abs(T1 - T2)) <= mdp.gamma * np.max(np.abs(Q1 - Q2)) + 1e-12

    @given(mdp_params)
    @settings(max_examples=40, deadline=None)
    def test_exact_solutions_are_fixed_points(self, params):
        mdp, pi, _ = _build(params)
        V = exact_value_pe(mdp, pi)
        assert np.max(np.abs(bellman_residual_pe(mdp, pi, V))) <= 1e-10
        Q = exact_value_control(mdp, tol=1e-9)
        assert np.max(np.abs(bellman_residual_control(mdp, Q))) <= 2e-9

    def test_exact_control_matches_best_deterministic_policy(self, rng):
        mdp = random_mdp(rng, 4, 2, 0.8)
        Q = exact_value_control(mdp)
        best = -np.inf * np.ones(4)
        for code in range(2**4):
            acts = [(code >> i) & 1 for i in range(4)]
            best = np.maximum(best, exact_value_pe(mdp, deterministic_policy(mdp, acts)))
        np.testing.assert_allclose(Q.max(axis=1), best, atol=1e-9)

    def test_exact_control_gamma_zero(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.0)
        np.testing.assert_array_equal(exact_value_control(mdp), mdp.mean_reward)

    def test_exact_control_iteration_cap(self, rng):
        with pytest.raises(RuntimeError):
            exact_value_control(random_mdp(rng, 3, 2, 0.99), max_iter=3)
        with pytest.raises(ValueError):
            exact_value_control(random_mdp(rng, 3, 2, 0.9), tol=0.0)


class TestSampling:
    def test_frequencies_match_kernel(self, rng):
        mdp = random_mdp(rng, 4, 2, 0.9)
        draws = [sample_transition(mdp, rng, 1, 1) for _ in range(20000)]
        freq = np.bincount([d.x_next for d in draws], minlength=4) / len(draws)
        np.testing.assert_allclose(freq, mdp.P[1, 1], atol=0.015)
        for d in draws[:50]:
            assert d.r == mdp.R[1, 1, d.x_next]
            assert (d.x, d.a) == (1, 1)

    def test_invalid_index(self, rng):
        with pytest.raises(IndexError):
            sample_transition(swap_chain(), rng, 2, 0)
        with pytest.raises(IndexError):
            sample_transition(swap_chain(), rng, 0, 1)

    def test_reward_variance(self):
        # one state, two equally likely successors paying 0 and 1: variance 1/4
        P = np.array([[[0.5, 0.5]], [[0.5, 0.5]]])
        R = np.zeros((2, 1, 2))
        R[:, :, 1] = 1.0
        np.testing.assert_allclose(reward_variance(TabularMdp(P, R, 0.5), np.ones((2, 1))), [0.25, 0.25])


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        mdp = random_mdp(rng, 3, 2, 0.7)
        path = tmp_path / "m.json"
        save_mdp(mdp, path)
        back = load_mdp(path)
        np.testing.assert_array_equal(back.P, mdp.P)
        np.testing.assert_array_equal(back.R, mdp.R)
        assert back.gamma == mdp.gamma
        doc = json.loads(path.read_text())
        assert set(doc) == {"n_states", "n_actions", "gamma", "transitions", "rewards"}

    def test_inconsistent_sizes(self, rng):
        doc = mdp_to_dict(random_mdp(rng, 3, 2, 0.7))
        doc["n_states"] = 4
        with pytest.raises(ValueError, match="does not match"):
            mdp_from_dict(doc)
