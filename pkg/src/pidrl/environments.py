"""Benchmark environments: Chain Walk, Cliff Walk and Garnet MDPs.

Each constructor returns ``(mdp, policy)`` where ``policy`` is the policy
evaluated in the policy-evaluation experiments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, deterministic_policy, uniform_policy

LEFT, RIGHT = 0, 1
UP, DOWN, WEST, EAST = 0, 1, 2, 3

CLIFF_ROWS, CLIFF_COLS = 6, 6
CLIFF_START = (0, 0)
CLIFF_GOAL = (0, 5)
# row -> reward for moving while stuck in a cliff tile of that row
CLIFF_TILES = {1: -32.0, 2: -16.0, 3: -8.0}
CLIFF_TILE_COLS = (1, 2, 3, 4)


def chain_walk(gamma: float = 0.9, n_states: int = 50) -> tuple[TabularMdp, np.ndarray]:
    """Circular chain; action 0 moves left (index - 1), action 1 right.

    The intended move succeeds w.p. 0.7, the agent stays w.p. 0.1 and moves
    the opposite way w.p. 0.2.  Entering state 10 pays +1, entering 40 pays -1.
    """
    n = n_states
    P = np.zeros((n, 2, n))
    for x in range(n):
        for a, step in ((LEFT, -1), (RIGHT, 1)):
            P[x, a, (x + step) % n] += 0.7
            P[x, a, x] += 0.1
            P[x, a, (x - step) % n] += 0.2
    entry = np.zeros(n)
    entry[10 % n] = 1.0
    entry[40 % n] = -1.0
    R = np.broadcast_to(entry, (n, 2, n)).copy()
    mdp = TabularMdp(P, R, gamma, name="chain-walk")
    return mdp, deterministic_policy(mdp, LEFT)


def cliff_state(row: int, col: int) -> int:
    return row * CLIFF_COLS + col


def cliff_tiles() -> dict[int, float]:
    """State index -> per-move reward for every cliff tile."""
    return {cliff_state(r, c): rew for r, rew in CLIFF_TILES.items() for c in CLIFF_TILE_COLS}


def cliff_walk(gamma: float = 0.9) -> tuple[TabularMdp, np.ndarray]:
    """6x6 grid world with 12 absorbing cliff tiles and an absorbing goal.

    Row 0 is the top row; the start is (0, 0) and the goal (0, 5).  Moving in
    the goal pays 20, moving in a cliff pays -32/-16/-8 by row, every other
    move pays -1.  Off-grid moves leave the agent in place; otherwise the
    intended direction is taken w.p. 0.9 and each other direction w.p. 0.1/3.
    """
    n = CLIFF_ROWS * CLIFF_COLS
    moves = {UP: (-1, 0), DOWN: (1, 0), WEST: (0, -1), EAST: (0, 1)}
    cliffs = cliff_tiles()
    goal = cliff_state(*CLIFF_GOAL)
    P = np.zeros((n, 4, n))
    R = np.zeros((n, 4, n))

    def target(row, col, d):
        dr, dc = moves[d]
        r2, c2 = row + dr, col + dc
        if 0 <= r2 < CLIFF_ROWS and 0 <= c2 < CLIFF_COLS:
            return cliff_state(r2, c2)
        return cliff_state(row, col)

    for row in range(CLIFF_ROWS):
        for col in range(CLIFF_COLS):
            x = cliff_state(row, col)
            for a in range(4):
                if x == goal or x in cliffs:
                    P[x, a, x] = 1.0
                    R[x, a, :] = 20.0 if x == goal else cliffs[x]
                    continue
                if target(row, col, a) == x:
                    # attempted to leave the grid
                    P[x, a, x] = 1.0
                else:
                    for d in range(4):
                        P[x, a, target(row, col, d)] += 0.9 if d == a else 0.1 / 3
                R[x, a, :] = -1.0
    mdp = TabularMdp(P, R, gamma, name="cliff-walk")
    return mdp, uniform_policy(mdp)


@dataclass(frozen=True)
class GarnetSpec:
    n_states: int = 50
    n_actions: int = 3
    branching: int = 5
    n_reward_states: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("n_states and n_actions must be positive")
        if not 1 <= self.branching <= self.n_states - 1:
            raise ValueError("branching must be between 1 and n_states - 1 (successors exclude the source)")
        if not 0 <= self.n_reward_states <= self.n_states:
            raise ValueError("n_reward_states must be between 0 and n_states")


def garnet(spec: GarnetSpec = GarnetSpec(), gamma: float = 0.99) -> tuple[TabularMdp, np.ndarray]:
    """Random Garnet MDP.

    Every (x, a) moves uniformly to ``branching`` distinct states other than
    x.  ``n_reward_states`` states carry a reward drawn from U(0, 1), paid for
    any action taken in that state.
    """
    rng = np.random.default_rng(spec.seed)
    n, m, b = spec.n_states, spec.n_actions, spec.branching
    P = np.zeros((n, m, n))
    for x in range(n):
        others = np.delete(np.arange(n), x)
        for a in range(m):
            succ = rng.choice(others, size=b, replace=False)
            P[x, a, succ] = 1.0 / b
    state_reward = np.zeros(n)
    chosen = rng.choice(n, size=spec.n_reward_states, replace=False)
    # open interval (0, 1): U[0, 1) may return exactly 0
    vals = rng.random(spec.n_reward_states)
    while np.any(vals == 0.0):
        vals[vals == 0.0] = rng.random(int(np.sum(vals == 0.0)))
    state_reward[chosen] = vals
    R = np.broadcast_to(state_reward[:, None, None], (n, m, n)).copy()
    mdp = TabularMdp(P, R, gamma, name=f"garnet-{spec.seed}")
    return mdp, uniform_policy(mdp)


ENVIRONMENTS = ("chain-walk", "cliff-walk", "garnet")


def make_environment(name: str, gamma: float, **garnet_kwargs) -> tuple[TabularMdp, np.ndarray]:
    if name == "chain-walk":
        return chain_walk(gamma)
    if name == "cliff-walk":
        return cliff_walk(gamma)
    if name == "garnet":
        return garnet(GarnetSpec(**garnet_kwargs), gamma)
    raise ValueError(f"unknown environment {name!r}; choose from {ENVIRONMENTS}")
