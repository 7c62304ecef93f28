"""Model-based PID Value Iteration and its gain adaptation.

The iterate is the triple ``(V, z, V_prev)``: value estimate, running average
of Bellman residuals, and the previous value estimate.  One PID VI step is

    BR     = T V - V
    z'     = beta z + alpha BR
    V'     = V + kp BR + ki z' + kd (V - V_prev)
    V_prev = V

With ``(kp, ki, kd) = (1, 0, 0)`` this is plain value iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mdp import (
    TabularMdp,
    bellman_residual_control,
    bellman_residual_pe,
    greedy_policy,
    policy_kernel,
)

BLOWUP = 1e12
GA_NORM_GUARD = 1e-12


@dataclass(frozen=True)
class Gains:
    kappa_p: float = 1.0
    kappa_i: float = 0.0
    kappa_d: float = 0.0
    alpha: float = 0.05
    beta: float = 0.95

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_tuple())):
            raise ValueError(f"gains must be finite: {self}")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.kappa_p, self.kappa_i, self.kappa_d, self.alpha, self.beta)

    @classmethod
    def parse(cls, text: str) -> "Gains":
        """Parse ``"kp,ki,kd[,alpha,beta]"``."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) not in (3, 5):
            raise ValueError(f"expected 3 or 5 comma-separated gains, got {text!r}")
        return cls(*parts)

    def with_controller(self, kappa_p, kappa_i, kappa_d) -> "Gains":
        return replace(self, kappa_p=float(kappa_p), kappa_i=float(kappa_i), kappa_d=float(kappa_d))


VI_GAINS = Gains(1.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class PidState:
    """Augmented iterate ``[V; z; V_prev]`` (or ``[Q; z; Q_prev]``)."""

    v: np.ndarray
    z: np.ndarray
    v_prev: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "PidState":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_values(cls, v) -> "PidState":
        """State with ``z = 0`` and ``v_prev = v``."""
        v = np.array(v, dtype=float)
        return cls(v, np.zeros_like(v), v.copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.v.ravel(), self.z.ravel(), self.v_prev.ravel()])

    @classmethod
    def from_stacked(cls, vec, shape) -> "PidState":
        vec = np.asarray(vec, dtype=float)
        size = int(np.prod(shape))
        if vec.shape != (3 * size,):
            raise ValueError(f"stacked vector must have length {3 * size}")
        parts = [vec[i * size:(i + 1) * size].reshape(shape).copy() for i in range(3)]
        return cls(*parts)

    def copy(self) -> "PidState":
        return PidState(self.v.copy(), self.z.copy(), self.v_prev.copy())

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.v)), np.max(np.abs(self.z)), np.max(np.abs(self.v_prev))))


PeState = PidState
QState = PidState


def _pid_update(state: PidState, br: np.ndarray, gains: Gains) -> PidState:
    z_next = gains.beta * state.z + gains.alpha * br
    v_next = (state.v + gains.kappa_p * br
              + gains.kappa_i * z_next
              + gains.kappa_d * (state.v - state.v_prev))
    return PidState(v_next, z_next, state.v.copy())


def _check_shape(state: PidState, shape):
    for part in (state.v, state.z, state.v_prev):
        if np.shape(part) != shape:
            raise ValueError(f"state component has shape {np.shape(part)}, expected {shape}")


def pid_vi_step_pe(mdp: TabularMdp, policy, gains: Gains, state: PidState) -> PidState:
    _check_shape(state, (mdp.n_states,))
    return _pid_update(state, bellman_residual_pe(mdp, policy, state.v), gains)


def pid_vi_step_control(mdp: TabularMdp, gains: Gains, state: PidState) -> PidState:
    _check_shape(state, (mdp.n_states, mdp.n_actions))
    return _pid_update(state, bellman_residual_control(mdp, state.v), gains)


def _ga_directions(br, state: PidState, gains: Gains):
    """dV_{k+1}/d(kp, ki, kd) with the previous iterates held fixed."""
    return (br,
            gains.beta * state.z + gains.alpha * br,
            state.v - state.v_prev)


def ga_vi_gradient(mdp: TabularMdp, policy, gains: Gains, state: PidState) -> tuple[np.ndarray, float]:
    """Gradient of ``0.5 ||BR V_{k+1}||^2`` w.r.t. (kp, ki, kd), and ``||BR V_k||^2``.

    ``policy=None`` selects the control problem; there the residual's
    derivative uses the greedy policy of ``Q_{k+1}``.
    """
    control = policy is None
    residual = (lambda v: bellman_residual_control(mdp, v)) if control else \
        (lambda v: bellman_residual_pe(mdp, policy, v))
    br = residual(state.v)
    nxt = _pid_update(state, br, gains)
    br_next = residual(nxt.v)
    gamma = mdp.gamma
    if control:
        n, m = mdp.n_states, mdp.n_actions
        greedy_next = greedy_policy(nxt.v)

        def dbr(d):
            # d/dκ (r + γ P max_a' Q - Q), max taken at the greedy action
            d_greedy = np.einsum("ya,ya->y", greedy_next, d)
            return gamma * mdp.P.reshape(n * m, n).dot(d_greedy).reshape(n, m) - d
    else:
        P_pi = policy_kernel(mdp, policy)

        def dbr(d):
            return gamma * P_pi @ d - d
    grad = np.array([np.sum(br_next * dbr(d)) for d in _ga_directions(br, state, gains)])
    return grad, float(np.sum(br * br))


def ga_vi_step(mdp: TabularMdp, policy, gains: Gains, state: PidState, eta: float) -> Gains:
    """Normalized gradient step on the squared Bellman residual of the next iterate.

    Updates (kp, ki, kd); alpha and beta are fixed.  Returns ``gains``
    unchanged when ``||BR V_k||_2`` is below 1e-12.
    """
    grad, norm_sq = ga_vi_gradient(mdp, policy, gains, state)
    if eta == 0.0 or np.sqrt(norm_sq) < GA_NORM_GUARD:
        return gains
    kp, ki, kd = np.array([gains.kappa_p, gains.kappa_i, gains.kappa_d]) - eta * grad / norm_sq
    return gains.with_controller(kp, ki, kd)


@dataclass
class PlanResult:
    state: PidState
    errors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    gains: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False


def pid_vi_run(mdp: TabularMdp, gains: Gains, policy=None, init: PidState | None = None,
               k_max: int = 1000, tol: float = 1e-8, exact=None, adapt_eta: float | None = None,
               blowup: float = BLOWUP) -> PlanResult:
    """Iterate PID VI (``policy=None`` for control) until the sup-norm
    Bellman residual drops to ``tol`` or ``k_max`` steps are taken.

    ``errors[k]`` is ``||V_k - exact||_inf`` when ``exact`` is given.  With
    ``adapt_eta`` the gains are adapted after every step.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    control = policy is None
    shape = (mdp.n_states, mdp.n_actions) if control else (mdp.n_states,)
    state = init.copy() if init is not None else PidState.zeros(shape)
    residual = (lambda v: bellman_residual_control(mdp, v)) if control else \
        (lambda v: bellman_residual_pe(mdp, policy, v))
    result = PlanResult(state)

    def record(st, g):
        if exact is not None:
            result.errors.append(float(np.max(np.abs(st.v - exact))))
        result.residuals.append(float(np.max(np.abs(residual(st.v)))))
        result.gains.append((g.kappa_p, g.kappa_i, g.kappa_d))

    record(state, gains)
    for k in range(1, k_max + 1):
        if control:
            nxt = pid_vi_step_control(mdp, gains, state)
        else:
            nxt = pid_vi_step_pe(mdp, policy, gains, state)
        if adapt_eta is not None:
            gains = ga_vi_step(mdp, policy, gains, state, adapt_eta)
        state = nxt
        result.iterations = k
        if not np.isfinite(state.sup_norm()) or state.sup_norm() > blowup:
            result.diverged = True
            break
        record(state, gains)
        if result.residuals[-1] <= tol:
            result.converged = True
            break
    result.state = state
    return result
