import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import lazy_path, random_mdp, random_policy, swap_chain
from pidrl.environments import chain_walk
from pidrl.mdp import bellman_control, bellman_pe, exact_value_control, exact_value_pe
from pidrl.planning import (
    VI_GAINS,
    Gains,
    PidState,
    ga_vi_gradient,
    ga_vi_step,
    pid_vi_run,
    pid_vi_step_control,
    pid_vi_step_pe,
)


class TestGains:
    def test_parse(self):
        assert Gains.parse("1.2,0.1,0.3") == Gains(1.2, 0.1, 0.3, 0.05, 0.95)
        assert Gains.parse("1,0,0,0.5,0.2").as_tuple() == (1.0, 0.0, 0.0, 0.5, 0.2)

    @pytest.mark.parametrize("text", ["1,2", "1,2,3,4", "a,b,c"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            Gains.parse(text)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            Gains(np.inf, 0, 0)

    def test_with_controller_keeps_integrator(self):
        g = Gains(1, 0, 0, 0.3, 0.4).with_controller(2, 3, 4)
        assert g.as_tuple() == (2.0, 3.0, 4.0, 0.3, 0.4)


class TestState:
    def test_stacked_round_trip(self, rng):
        s = PidState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
        back = PidState.from_stacked(s.stacked(), (3, 2))
        for a, b in zip((s.v, s.z, s.v_prev), (back.v, back.z, back.v_prev)):
            np.testing.assert_array_equal(a, b)
        with pytest.raises(ValueError):
            PidState.from_stacked(np.zeros(5), (3, 2))

    def test_from_values(self):
        s = PidState.from_values([1.0, 2.0])
        np.testing.assert_array_equal(s.v_prev, [1.0, 2.0])
        np.testing.assert_array_equal(s.z, 0.0)
        s.v[0] = 9
        assert s.v_prev[0] == 1.0

    def test_step_shape_check(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.9)
        with pytest.raises(ValueError, match="shape"):
            pid_vi_step_pe(mdp, random_policy(rng, 3, 2), Gains(), PidState.zeros(4))
        with pytest.raises(ValueError, match="shape"):
            pid_vi_step_control(mdp, Gains(), PidState.zeros(3))


class TestSteps:
    def test_hand_step(self):
        # swap chain, gamma 0.5: T V = [0.5 V1, 1 + 0.5 V0]
        mdp = swap_chain()
        st_ = PidState(np.array([1.0, 2.0]), np.array([0.5, -1.0]), np.array([0.0, 3.0]))
        g = Gains(1.5, 0.4, 0.2, 0.1, 0.8)
        # BR = [1 - 1, 1.5 - 2] = [0, -0.5]
        # z' = 0.8 z + 0.1 BR = [0.4, -0.85]
        # V' = V + 1.5 BR + 0.4 z' + 0.2 (V - Vp) = [1 + 0.16 + 0.2, 2 - 0.75 - 0.34 - 0.2]
        out = pid_vi_step_pe(mdp, np.ones((2, 1)), g, st_)
        np.testing.assert_allclose(out.z, [0.4, -0.85], atol=1e-15)
        np.testing.assert_allclose(out.v, [1.36, 0.71], atol=1e-15)
        np.testing.assert_array_equal(out.v_prev, [1.0, 2.0])

    @given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_vi_gains_give_bellman_operator(self, n, m, seed):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, n, m, 0.9)
        pi = random_policy(rng, n, m)
        V = rng.normal(size=n)
        out = pid_vi_step_pe(mdp, pi, VI_GAINS, PidState(V, rng.normal(size=n), rng.normal(size=n)))
        np.testing.assert_allclose(out.v, bellman_pe(mdp, pi, V), atol=1e-12)
        Q = rng.normal(size=(n, m))
        outq = pid_vi_step_control(mdp, VI_GAINS, PidState.from_values(Q))
        np.testing.assert_allclose(outq.v, bellman_control(mdp, Q), atol=1e-12)

    def test_step_does_not_mutate_input(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.9)
        s = PidState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
        before = s.stacked()
        pid_vi_step_pe(mdp, random_policy(rng, 3, 2), Gains(1.2, 0.3, 0.1), s)
        np.testing.assert_array_equal(s.stacked(), before)


class TestRun:
    def test_pe_converges_to_exact(self):
        mdp, pi = lazy_path()
        V = exact_value_pe(mdp, pi)
        res = pid_vi_run(mdp, Gains(1.4, 0.0, 0.4, 0.05, 0.0), policy=pi, k_max=2000, tol=1e-11, exact=V)
        assert res.converged and not res.diverged
        assert res.errors[-1] < 1e-9
        assert len(res.errors) == len(res.residuals) == len(res.gains) == res.iterations + 1

    def test_accelerated_gains_beat_vi(self):
        mdp, pi = lazy_path()
        V = exact_value_pe(mdp, pi)
        vi = pid_vi_run(mdp, VI_GAINS, policy=pi, k_max=60, tol=0.0, exact=V)
        pid = pid_vi_run(mdp, Gains(1.4, 0.0, 0.4, 0.05, 0.0), policy=pi, k_max=60, tol=0.0, exact=V)
        assert pid.errors[-1] < 0.01 * vi.errors[-1]

    def test_control_converges(self):
        mdp, _ = chain_walk(0.9)
        Q = exact_value_control(mdp)
        res = pid_vi_run(mdp, Gains(1.0, 0.1, 0.1), k_max=3000, tol=1e-10, exact=Q)
        assert res.converged
        assert res.errors[-1] < 1e-8

    def test_divergence_flag(self):
        mdp, pi = chain_walk(0.9)
        res = pid_vi_run(mdp, Gains(1.6, 0.0, 0.3), policy=pi, k_max=500)
        assert res.diverged and not res.converged
        assert res.iterations < 500

    def test_k_max_validation(self):
        mdp, pi = chain_walk(0.9)
        with pytest.raises(ValueError):
            pid_vi_run(mdp, Gains(), policy=pi, k_max=0)

    def test_init_is_copied(self):
        mdp, pi = chain_walk(0.9)
        init = PidState.zeros(50)
        pid_vi_run(mdp, Gains(), policy=pi, init=init, k_max=3)
        np.testing.assert_array_equal(init.v, 0.0)


class TestGainAdaptationVI:
    @pytest.mark.parametrize("control", [False, True])
    def test_gradient_matches_finite_differences(self, rng, control):
        mdp = random_mdp(rng, 5, 2, 0.9)
        pi = None if control else random_policy(rng, 5, 2)
        shape = (5, 2) if control else (5,)
        state = PidState(rng.normal(size=shape), rng.normal(size=shape), rng.normal(size=shape))
        gains = Gains(1.1, 0.2, 0.1, 0.05, 0.95)
        grad, norm_sq = ga_vi_gradient(mdp, pi, gains, state)

        def loss(kp, ki, kd):
            g = gains.with_controller(kp, ki, kd)
            if control:
                nxt = pid_vi_step_control(mdp, g, state)
                br = bellman_control(mdp, nxt.v) - nxt.v
            else:
                nxt = pid_vi_step_pe(mdp, pi, g, state)
                br = bellman_pe(mdp, pi, nxt.v) - nxt.v
            return 0.5 * np.sum(br**2)

        h = 1e-6
        base = np.array([1.1, 0.2, 0.1])
        fd = []
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd.append((loss(*(base + e)) - loss(*(base - e))) / (2 * h))
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)
        br0 = (bellman_control(mdp, state.v) if control else bellman_pe(mdp, pi, state.v)) - state.v
        assert norm_sq == pytest.approx(np.sum(br0**2))

    def test_step_normalization(self, rng):
        mdp = random_mdp(rng, 4, 2, 0.9)
        pi = random_policy(rng, 4, 2)
        state = PidState(rng.normal(size=4), rng.normal(size=4), rng.normal(size=4))
        g = Gains(1.0, 0.1, 0.1)
        grad, norm_sq = ga_vi_gradient(mdp, pi, g, state)
        new = ga_vi_step(mdp, pi, g, state, 0.01)
        np.testing.assert_allclose(np.array(new.as_tuple()[:3]), np.array(g.as_tuple()[:3]) - 0.01 * grad / norm_sq)
        assert new.alpha == g.alpha and new.beta == g.beta

    def test_eta_zero_and_guard(self, rng):
        mdp, pi = chain_walk(0.9)
        g = Gains(1.0, 0.1, 0.1)
        assert ga_vi_step(mdp, pi, g, PidState.zeros(50), 0.0) == g
        fixed = PidState.from_values(exact_value_pe(mdp, pi))
        assert ga_vi_step(mdp, pi, g, fixed, 1.0) == g

    def test_adaptive_run_records_gain_changes(self):
        mdp, pi = lazy_path(gamma=0.99)
        V = exact_value_pe(mdp, pi)
        res = pid_vi_run(mdp, Gains(1.0, 0.0, 0.0), policy=pi, k_max=300, tol=0.0, exact=V, adapt_eta=0.05)
        assert not res.diverged
        assert res.gains[-1] != res.gains[0]
        vi = pid_vi_run(mdp, VI_GAINS, policy=pi, k_max=300, tol=0.0, exact=V)
        assert res.errors[-1] < vi.errors[-1]
