"""Finite MDPs, policy kernels, Bellman operators and exact solutions.

Rewards are stored as a tensor ``R[x, a, x']`` so that environments whose
reward depends on the entered state (Chain Walk, Cliff Walk) and those whose
reward depends only on the current state (Garnet) share one representation.
A sampled transition draws ``x'`` first and reads the reward off the tensor,
which keeps the one-sample Bellman residual estimate unbiased.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ROW_TOL = 1e-12


class TransitionSample(NamedTuple):
    x: int
    a: int
    r: float
    x_next: int


@dataclass(frozen=True)
class TabularMdp:
    """Finite discounted MDP.

    P: (n, m, n) transition probabilities ``P[x, a, x']``.
    R: (n, m, n) reward received on the transition ``(x, a) -> x'``.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    theory_mode: bool = False
    name: str = field(default="mdp", compare=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        R = np.array(self.R, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (n, m, n), got {P.shape}")
        if R.shape != P.shape:
            raise ValueError(f"rewards shape {R.shape} does not match transitions {P.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if np.any(P < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.max(np.abs(P.sum(axis=2) - 1.0)) > ROW_TOL:
            raise ValueError("every transition row must sum to 1")
        if not np.all(np.isfinite(R)):
            raise ValueError("rewards must be finite")
        if self.theory_mode and (R.min() < 0.0 or R.max() > 1.0):
            raise ValueError("theory_mode requires rewards in [0, 1]")
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def mean_reward(self) -> np.ndarray:
        """r(x, a) = sum_x' P(x'|x, a) R(x, a, x')."""
        return np.einsum("xay,xay->xa", self.P, self.R)

    @property
    def reward_range(self) -> tuple[float, float]:
        return float(self.R.min()), float(self.R.max())


def check_policy(mdp: TabularMdp, policy) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    if np.any(pi < 0.0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > ROW_TOL:
        raise ValueError("policy rows must be probability distributions")
    return pi


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def deterministic_policy(mdp: TabularMdp, actions) -> np.ndarray:
    actions = np.broadcast_to(np.asarray(actions, dtype=int), (mdp.n_states,))
    pi = np.zeros((mdp.n_states, mdp.n_actions))
    pi[np.arange(mdp.n_states), actions] = 1.0
    return pi


def greedy_policy(Q: np.ndarray) -> np.ndarray:
    """Deterministic greedy policy; ties go to the lowest action index."""
    pi = np.zeros_like(Q, dtype=float)
    pi[np.arange(Q.shape[0]), np.argmax(Q, axis=1)] = 1.0
    return pi


def _check_values(mdp: TabularMdp, V, shape) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {V.shape}")
    return V


def policy_kernel(mdp: TabularMdp, policy) -> np.ndarray:
    """P^pi(x, x') = sum_a pi(a|x) P(x'|x, a)."""
    pi = check_policy(mdp, policy)
    return np.einsum("xa,xay->xy", pi, mdp.P)


def expected_reward(mdp: TabularMdp, policy) -> np.ndarray:
    pi = check_policy(mdp, policy)
    return np.einsum("xa,xa->x", pi, mdp.mean_reward)


def bellman_pe(mdp: TabularMdp, policy, V) -> np.ndarray:
    V = _check_values(mdp, V, (mdp.n_states,))
    return expected_reward(mdp, policy) + mdp.gamma * policy_kernel(mdp, policy) @ V


def bellman_control(mdp: TabularMdp, Q) -> np.ndarray:
    Q = _check_values(mdp, Q, (mdp.n_states, mdp.n_actions))
    return mdp.mean_reward + mdp.gamma * mdp.P @ Q.max(axis=1)


def bellman_residual_pe(mdp: TabularMdp, policy, V) -> np.ndarray:
    return bellman_pe(mdp, policy, V) - np.asarray(V, dtype=float)


def bellman_residual_control(mdp: TabularMdp, Q) -> np.ndarray:
    return bellman_control(mdp, Q) - np.asarray(Q, dtype=float)


def exact_value_pe(mdp: TabularMdp, policy) -> np.ndarray:
    """Solve (I - gamma P^pi) V = r^pi."""
    P_pi = policy_kernel(mdp, policy)
    r_pi = expected_reward(mdp, policy)
    lhs = np.eye(mdp.n_states) - mdp.gamma * P_pi
    try:
        V = np.linalg.solve(lhs, r_pi)
    except np.linalg.LinAlgError as exc:  # cannot happen for gamma < 1
        raise RuntimeError("policy evaluation system is singular") from exc
    return V


def exact_value_control(mdp: TabularMdp, tol: float = 1e-10, max_iter: int = 10**6) -> np.ndarray:
    """Q* by value iteration with the contraction stopping rule.

    Stops once ``||Q_{k+1} - Q_k||_inf <= tol (1 - gamma) / (2 gamma)`` so the
    returned table is within ``tol`` of Q* in sup-norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    if mdp.gamma == 0.0:
        return mdp.mean_reward.copy()
    threshold = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma)
    r, P, gamma = mdp.mean_reward, mdp.P, mdp.gamma
    for _ in range(max_iter):
        Q_next = r + gamma * P @ Q.max(axis=1)
        diff = np.max(np.abs(Q_next - Q))
        Q = Q_next
        if diff <= threshold:
            return Q
    raise RuntimeError(f"value iteration did not reach tol={tol} in {max_iter} iterations")


def sample_transition(mdp: TabularMdp, rng: np.random.Generator, x: int, a: int) -> TransitionSample:
    if not (0 <= x < mdp.n_states and 0 <= a < mdp.n_actions):
        raise IndexError(f"invalid state/action ({x}, {a})")
    x_next = int(rng.choice(mdp.n_states, p=mdp.P[x, a]))
    return TransitionSample(int(x), int(a), float(mdp.R[x, a, x_next]), x_next)


def reward_variance(mdp: TabularMdp, policy) -> np.ndarray:
    """Variance of the reward received from each state under ``policy``.

    Accounts for the randomness of both the action and the next state.
    """
    pi = check_policy(mdp, policy)
    w = pi[:, :, None] * mdp.P
    mean = np.einsum("xay,xay->x", w, mdp.R)
    second = np.einsum("xay,xay->x", w, mdp.R**2)
    return np.maximum(second - mean**2, 0.0)


# serialization ---------------------------------------------------------------

def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transitions": mdp.P.tolist(),
        "rewards": mdp.R.tolist(),
    }


def mdp_from_dict(doc: dict) -> TabularMdp:
    P = np.asarray(doc["transitions"], dtype=float)
    R = np.asarray(doc["rewards"], dtype=float)
    n, m = int(doc["n_states"]), int(doc["n_actions"])
    if P.shape != (n, m, n):
        raise ValueError(f"transitions shape {P.shape} does not match n_states={n}, n_actions={m}")
    return TabularMdp(P, R, float(doc["gamma"]), name=doc.get("name", "mdp"))


def save_mdp(mdp: TabularMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh)


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))
