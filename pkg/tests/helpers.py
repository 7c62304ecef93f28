"""Shared test helpers."""
import numpy as np

from pidrl.mdp import TabularMdp

ACCEPTANCE_LINES = []


def random_mdp(rng, n, m, gamma, reward_scale=1.0):
    """Dense random MDP with Dirichlet transitions and tensor rewards."""
    P = rng.dirichlet(np.ones(n), size=(n, m))
    R = reward_scale * rng.uniform(-1.0, 1.0, size=(n, m, n))
    return TabularMdp(P, R, gamma)


def random_policy(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


def lazy_path(n=10, gamma=0.9):
    """Reversible lazy random walk on a path; entering 0 pays 1, entering
    n-1 pays -0.5.  Real spectrum, so momentum-type gains cut rho well
    below gamma."""
    P = np.zeros((n, 1, n))
    for x in range(n):
        P[x, 0, x] += 0.5
        P[x, 0, max(x - 1, 0)] += 0.25
        P[x, 0, min(x + 1, n - 1)] += 0.25
    R = np.zeros((n, 1, n))
    R[:, 0, 0] = 1.0
    R[:, 0, n - 1] = -0.5
    return TabularMdp(P, R, gamma, name="lazy-path"), np.ones((n, 1))


def three_state_mdp():
    """Two-action, three-state MDP used by the hand-computed oracles."""
    P = np.array([
        [[0.0, 1.0, 0.0], [0.5, 0.0, 0.5]],
        [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
        [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]],
    ])
    R = np.zeros((3, 2, 3))
    R[:, :, 1] = 1.0
    R[:, :, 2] = -2.0
    return TabularMdp(P, R, 0.9, name="three")


def swap_chain():
    """Two states that swap every step; entering state 0 pays 1; gamma 0.5."""
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    R = np.zeros((2, 1, 2))
    R[:, :, 0] = 1.0
    return TabularMdp(P, R, 0.5)
