import numpy as np
import pytest

from pidrl.environments import (
    CLIFF_GOAL,
    DOWN,
    EAST,
    LEFT,
    RIGHT,
    UP,
    WEST,
    GarnetSpec,
    chain_walk,
    cliff_state,
    cliff_tiles,
    cliff_walk,
    garnet,
    make_environment,
)
from pidrl.mdp import exact_value_control, exact_value_pe, policy_kernel


class TestChainWalk:
    def test_transition_probabilities(self):
        mdp, _ = chain_walk()
        assert (mdp.n_states, mdp.n_actions) == (50, 2)
        assert mdp.P[5, LEFT, 4] == 0.7 and mdp.P[5, LEFT, 5] == 0.1 and mdp.P[5, LEFT, 6] == 0.2
        assert mdp.P[5, RIGHT, 6] == 0.7 and mdp.P[5, RIGHT, 4] == 0.2
        # circular ends
        assert mdp.P[0, LEFT, 49] == 0.7 and mdp.P[49, RIGHT, 0] == 0.7

    def test_rewards_on_entering(self):
        mdp, _ = chain_walk()
        assert mdp.R[11, LEFT, 10] == 1.0 and mdp.R[41, LEFT, 40] == -1.0
        assert mdp.R[10, LEFT, 10] == 1.0  # staying counts as entering
        assert mdp.R[11, LEFT, 11] == 0.0
        # expected reward from state 11 going left: 0.7 * 1
        assert mdp.mean_reward[11, LEFT] == pytest.approx(0.7)

    def test_policy_is_always_left(self):
        _, pi = chain_walk()
        np.testing.assert_array_equal(pi[:, LEFT], 1.0)

    def test_gamma_passthrough(self):
        assert chain_walk(0.999)[0].gamma == 0.999


class TestCliffWalk:
    def test_layout(self):
        mdp, pi = cliff_walk()
        assert (mdp.n_states, mdp.n_actions) == (36, 4)
        np.testing.assert_allclose(pi, 0.25)
        tiles = cliff_tiles()
        assert len(tiles) == 12
        assert sorted(set(tiles.values())) == [-32.0, -16.0, -8.0]

    def test_absorbing_states(self):
        mdp, _ = cliff_walk()
        goal = cliff_state(*CLIFF_GOAL)
        for x, rew in list(cliff_tiles().items()) + [(goal, 20.0)]:
            for a in range(4):
                assert mdp.P[x, a, x] == 1.0
                assert mdp.R[x, a, x] == rew

    def test_slippery_moves(self):
        mdp, _ = cliff_walk()
        x = cliff_state(4, 2)
        assert mdp.P[x, UP, cliff_state(3, 2)] == pytest.approx(0.9)
        for other in (cliff_state(5, 2), cliff_state(4, 1), cliff_state(4, 3)):
            assert mdp.P[x, UP, other] == pytest.approx(0.1 / 3)
        assert mdp.R[x, UP, cliff_state(3, 2)] == -1.0

    def test_off_grid_move_stays(self):
        mdp, _ = cliff_walk()
        corner = cliff_state(5, 0)
        assert mdp.P[corner, DOWN, corner] == 1.0
        assert mdp.P[corner, WEST, corner] == 1.0
        # an allowed move whose slip would leave the grid stays in place
        assert mdp.P[corner, EAST, corner] == pytest.approx(2 * 0.1 / 3)

    def test_values_are_finite_at_long_horizon(self):
        mdp, pi = cliff_walk(0.999)
        V = exact_value_pe(mdp, pi)
        assert np.all(np.isfinite(V))
        assert V[cliff_state(*CLIFF_GOAL)] == pytest.approx(20 / (1 - 0.999))


class TestGarnet:
    def test_structure(self):
        spec = GarnetSpec(n_states=30, n_actions=4, branching=3, n_reward_states=7, seed=5)
        mdp, pi = garnet(spec, 0.95)
        assert (mdp.n_states, mdp.n_actions) == (30, 4)
        support = mdp.P > 0
        np.testing.assert_array_equal(support.sum(axis=2), 3)
        np.testing.assert_allclose(mdp.P[support], 1 / 3)
        for x in range(30):
            assert not support[x, :, x].any()
        state_reward = mdp.R[:, 0, 0]
        assert np.count_nonzero(state_reward) == 7
        assert np.all((state_reward >= 0) & (state_reward < 1))
        # reward depends on the current state only
        assert np.all(mdp.R == state_reward[:, None, None])
        np.testing.assert_allclose(pi, 0.25)

    def test_seed_determinism(self):
        a, _ = garnet(GarnetSpec(seed=3))
        b, _ = garnet(GarnetSpec(seed=3))
        c, _ = garnet(GarnetSpec(seed=4))
        np.testing.assert_array_equal(a.P, b.P)
        np.testing.assert_array_equal(a.R, b.R)
        assert not np.array_equal(a.P, c.P)

    @pytest.mark.parametrize("kw", [dict(branching=0), dict(n_states=5, branching=5),
                                    dict(n_reward_states=60), dict(n_actions=0)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            GarnetSpec(**kw)

    def test_solvable(self):
        mdp, pi = garnet(GarnetSpec(seed=1))
        assert np.all(np.isfinite(exact_value_pe(mdp, pi)))
        assert np.all(np.isfinite(exact_value_control(mdp)))
        np.testing.assert_allclose(policy_kernel(mdp, pi).sum(axis=1), 1.0)


def test_make_environment():
    assert make_environment("chain-walk", 0.5)[0].gamma == 0.5
    assert make_environment("cliff-walk", 0.5)[0].n_states == 36
    assert make_environment("garnet", 0.5, n_states=10, branching=2)[0].n_states == 10
    with pytest.raises(ValueError, match="unknown environment"):
        make_environment("maze", 0.5)
