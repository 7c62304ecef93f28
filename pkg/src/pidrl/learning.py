"""Sample-based PID TD Learning and PID Q-Learning.

Asynchronous steps update one state (or state-action pair) in place from a
single transition ``(x, a, r, x')``.  All three right-hand sides of a PID
update read the pre-step values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .mdp import TabularMdp, TransitionSample, check_policy, sample_transition
from .planning import BLOWUP, Gains, PidState

# ---------------------------------------------------------------------------
# learning-rate schedules


@dataclass(frozen=True)
class Polynomial:
    """mu(t) = epsilon / (t + T)."""

    epsilon: float
    T: float

    def __post_init__(self):
        if self.epsilon < 0 or self.T <= 0:
            raise ValueError("Polynomial schedule needs epsilon >= 0 and T > 0")
        if self.epsilon > self.T:
            raise ValueError("Polynomial schedule needs T >= epsilon so that mu(0) <= 1")

    def __call__(self, k) -> float:
        return self.epsilon / (k + self.T)


@dataclass(frozen=True)
class CountCap:
    """mu(k) = min(epsilon, M / max(k, 1)); M = inf gives the constant epsilon."""

    epsilon: float
    M: float = math.inf

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1 or self.M <= 0:
            raise ValueError("CountCap schedule needs 0 <= epsilon <= 1 and M > 0")

    def __call__(self, k) -> float:
        if self.M == math.inf:
            return self.epsilon
        return min(self.epsilon, self.M / max(k, 1))


@dataclass(frozen=True)
class Constant:
    epsilon: float

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError("Constant schedule needs 0 <= epsilon <= 1")

    def __call__(self, k) -> float:
        return self.epsilon


def schedule_value(schedule, k) -> float:
    if k < 0:
        raise ValueError("visit count must be nonnegative")
    return schedule(k)


def parse_schedule(text: str):
    """``"eps"`` -> constant, ``"eps,M"`` -> CountCap (M may be ``inf``)."""
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) == 1:
        return CountCap(float(parts[0]))
    if len(parts) == 2:
        return CountCap(float(parts[0]), float(parts[1]))
    raise ValueError(f"cannot parse learning rate {text!r}; expected eps[,M]")


class ScheduleTriple(NamedTuple):
    v: object
    z: object
    v_prev: object

    @classmethod
    def shared(cls, schedule) -> "ScheduleTriple":
        return cls(schedule, schedule, schedule)


def _triple(schedules) -> ScheduleTriple:
    if isinstance(schedules, ScheduleTriple):
        return schedules
    return ScheduleTriple.shared(schedules)


# ---------------------------------------------------------------------------
# one-sample Bellman residuals and steps


def br_estimate_pe(sample: TransitionSample, V, gamma: float) -> float:
    return sample.r + gamma * V[sample.x_next] - V[sample.x]


def br_estimate_control(sample: TransitionSample, Q, gamma: float) -> float:
    return sample.r + gamma * np.max(Q[sample.x_next]) - Q[sample.x, sample.a]


def _pid_entry_update(state: PidState, idx, delta, gains: Gains, mus):
    v, z, vp = state.v[idx], state.z[idx], state.v_prev[idx]
    mu_v, mu_z, mu_p = mus
    state.v[idx] = v + mu_v * (gains.kappa_p * delta
                               + gains.kappa_i * (gains.beta * z + gains.alpha * delta)
                               + gains.kappa_d * (v - vp))
    state.z[idx] = z + mu_z * (gains.beta * z + gains.alpha * delta - z)
    state.v_prev[idx] = vp + mu_p * (v - vp)


def pid_td_step(state: PidState, counts, sample: TransitionSample, gamma: float,
                gains: Gains, schedules) -> float:
    """One PID TD update at ``sample.x`` (in place).  Returns the TD error."""
    sch = _triple(schedules)
    x = sample.x
    k = counts[x]
    delta = sample.r + gamma * state.v[sample.x_next] - state.v[x]
    _pid_entry_update(state, x, delta, gains, (sch.v(k), sch.z(k), sch.v_prev(k)))
    counts[x] = k + 1
    return delta


def pid_q_step(state: PidState, counts, sample: TransitionSample, gamma: float,
               gains: Gains, schedules) -> float:
    """One PID Q-Learning update at ``(sample.x, sample.a)`` (in place)."""
    sch = _triple(schedules)
    idx = (sample.x, sample.a)
    k = counts[idx]
    delta = sample.r + gamma * state.v[sample.x_next].max() - state.v[idx]
    _pid_entry_update(state, idx, delta, gains, (sch.v(k), sch.z(k), sch.v_prev(k)))
    counts[idx] = k + 1
    return delta


def td_step(V, counts, sample: TransitionSample, gamma: float, schedule) -> float:
    x = sample.x
    k = counts[x]
    delta = sample.r + gamma * V[sample.x_next] - V[x]
    V[x] = V[x] + schedule(k) * delta
    counts[x] = k + 1
    return delta


def q_step(Q, counts, sample: TransitionSample, gamma: float, schedule) -> float:
    idx = (sample.x, sample.a)
    k = counts[idx]
    delta = sample.r + gamma * Q[sample.x_next].max() - Q[idx]
    Q[idx] = Q[idx] + schedule(k) * delta
    counts[idx] = k + 1
    return delta


# ---------------------------------------------------------------------------
# synchronous variants


def sync_dataset(mdp: TabularMdp, policy, rng: np.random.Generator) -> list[TransitionSample]:
    """One fresh transition from every state, actions drawn from ``policy``."""
    pi = check_policy(mdp, policy)
    out = []
    for x in range(mdp.n_states):
        a = int(rng.choice(mdp.n_actions, p=pi[x]))
        out.append(sample_transition(mdp, rng, x, a))
    return out


def _dataset_arrays(dataset, n):
    if len(dataset) != n or sorted(s.x for s in dataset) != list(range(n)):
        raise ValueError("synchronous dataset must hold exactly one sample per state")
    order = sorted(dataset, key=lambda s: s.x)
    r = np.array([s.r for s in order])
    nxt = np.array([s.x_next for s in order])
    return r, nxt


def sync_td_step(V, dataset, gamma: float, mu: float) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    r, nxt = _dataset_arrays(dataset, V.shape[0])
    return V + mu * (r + gamma * V[nxt] - V)


def sync_pid_td_step(state: PidState, dataset, gamma: float, gains: Gains, mu: float) -> PidState:
    """Every state updated at once from time-t values, as in ``pid_td_step``."""
    r, nxt = _dataset_arrays(dataset, state.v.shape[0])
    return sync_pid_td_update(state, r + gamma * state.v[nxt] - state.v, gains, mu)


def sync_pid_td_update(state: PidState, delta, gains: Gains, mu: float) -> PidState:
    """Synchronous PID TD update for a given vector of one-sample residuals."""
    v, z, vp = state.v, state.z, state.v_prev
    v_new = v + mu * (gains.kappa_p * delta
                      + gains.kappa_i * (gains.beta * z + gains.alpha * delta)
                      + gains.kappa_d * (v - vp))
    z_new = z + mu * (gains.beta * z + gains.alpha * delta - z)
    vp_new = vp + mu * (v - vp)
    return PidState(v_new, z_new, vp_new)


# ---------------------------------------------------------------------------
# sample streams

SAMPLING_MODES = ("iid-state", "iid-state-action", "trajectory")


class SampleStream:
    """Transitions drawn from ``rng`` in fixed-size batches.

    ``iid-state``: X uniform over states, A ~ policy(X).
    ``iid-state-action``: (X, A) uniform over pairs.
    ``trajectory``: X_{t+1} = X'_t.  Actions follow ``policy`` (PE) or are
    epsilon-greedy in the current Q (control); see ``next``.
    """

    def __init__(self, mdp: TabularMdp, rng: np.random.Generator, mode: str = "iid-state",
                 policy=None, explore: float = 0.1, batch: int = 4096):
        if mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {mode!r}; choose from {SAMPLING_MODES}")
        if mode == "iid-state" and policy is None:
            raise ValueError("iid-state sampling needs a policy")
        self.mdp = mdp
        self.rng = rng
        self.mode = mode
        self.policy = None if policy is None else check_policy(mdp, policy)
        self.explore = explore
        self.batch = batch
        self._cumP = np.cumsum(mdp.P, axis=2)
        self._cumP[..., -1] = 1.0
        if self.policy is not None:
            self._cumpi = np.cumsum(self.policy, axis=1)
            self._cumpi[:, -1] = 1.0
        self._buf = []
        self._pos = 0
        self._state = None

    def _refill(self):
        n, m, B = self.mdp.n_states, self.mdp.n_actions, self.batch
        rng = self.rng
        if self.mode == "iid-state":
            xs = rng.integers(n, size=B)
            if m == 1:
                acts = np.zeros(B, dtype=np.int64)
            else:
                u = rng.random(B)
                acts = np.minimum((self._cumpi[xs] <= u[:, None]).sum(axis=1), m - 1)
        else:
            pairs = rng.integers(n * m, size=B)
            xs, acts = np.divmod(pairs, m)
        u = rng.random(B)
        nxt = np.minimum((self._cumP[xs, acts] <= u[:, None]).sum(axis=1), n - 1)
        rew = self.mdp.R[xs, acts, nxt]
        self._buf = list(zip(xs.tolist(), acts.tolist(), rew.tolist(), nxt.tolist()))
        self._pos = 0

    def next(self, Q=None) -> TransitionSample:
        """Next transition.  In trajectory mode without a policy, ``Q`` sets
        the epsilon-greedy behavior (ties to the lowest action)."""
        if self.mode == "trajectory":
            return self._next_trajectory(Q)
        if self._pos >= len(self._buf):
            self._refill()
        s = self._buf[self._pos]
        self._pos += 1
        return TransitionSample(*s)

    def _next_trajectory(self, Q):
        mdp, rng = self.mdp, self.rng
        if self._state is None:
            self._state = int(rng.integers(mdp.n_states))
        x = self._state
        if self.policy is not None:
            a = int(np.searchsorted(self._cumpi[x], rng.random(), side="right"))
        elif rng.random() < self.explore or Q is None:
            a = int(rng.integers(mdp.n_actions))
        else:
            a = int(np.argmax(Q[x]))
        a = min(a, mdp.n_actions - 1)
        x_next = min(int(np.searchsorted(self._cumP[x, a], rng.random(), side="right")), mdp.n_states - 1)
        self._state = x_next
        return TransitionSample(x, a, float(mdp.R[x, a, x_next]), x_next)


# ---------------------------------------------------------------------------
# runs


def normalized_error_pe(V, V_exact) -> float:
    """||V - V^pi||_1 / ||V^pi||_1."""
    denom = np.sum(np.abs(V_exact))
    if denom == 0.0:
        raise ValueError("exact value function has zero l1 norm")
    return float(np.sum(np.abs(np.asarray(V) - V_exact)) / denom)


def normalized_error_control(Q, Q_exact) -> float:
    """||Q - Q*||_F / ||Q*||_F."""
    denom = np.linalg.norm(Q_exact)
    if denom == 0.0:
        raise ValueError("exact action-value function has zero Frobenius norm")
    return float(np.linalg.norm(np.asarray(Q) - Q_exact) / denom)


@dataclass
class RunResult:
    run_id: int
    seed: int
    steps: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    gains: list = field(default_factory=list)
    diverged: bool = False
    mdp_seed: int | None = None
    final_state: PidState | None = field(default=None, repr=False, compare=False)


ALGORITHMS = ("td", "pid-td", "q", "pid-q")


def is_control(algorithm: str) -> bool:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    return algorithm in ("q", "pid-q")


def eval_grid(total_steps: int, eval_every: int) -> list[int]:
    if total_steps < 0 or eval_every < 1:
        raise ValueError("total_steps must be >= 0 and eval_every >= 1")
    grid = list(range(0, total_steps + 1, eval_every))
    if grid[-1] != total_steps:
        grid.append(total_steps)
    return grid


def _initial_state(shape, init):
    if init is None:
        return PidState.zeros(shape)
    if isinstance(init, PidState):
        return init.copy()
    return PidState.from_values(np.broadcast_to(np.asarray(init, dtype=float), shape))


@np.errstate(over="ignore", invalid="ignore")
def run_learning(mdp: TabularMdp, policy, algorithm: str, gains: Gains | None, schedules,
                 total_steps: int, eval_every: int, rng: np.random.Generator, exact,
                 sampling: str | None = None, init=None, run_id: int = 0, seed: int = 0,
                 blowup: float = BLOWUP, explore: float = 0.1) -> RunResult:
    """Run one learner for ``total_steps`` samples and record the normalized
    error against ``exact`` every ``eval_every`` steps.

    ``td``/``q`` update only the value table; ``pid-td``/``pid-q`` carry the
    full PID state.  A run whose sup-norm exceeds ``blowup`` is flagged
    diverged and records ``inf`` from then on.
    """
    control = is_control(algorithm)
    pid = algorithm.startswith("pid")
    if pid and gains is None:
        raise ValueError(f"{algorithm} needs gains")
    sampling = sampling or ("iid-state-action" if control else "iid-state")
    shape = (mdp.n_states, mdp.n_actions) if control else (mdp.n_states,)
    stream = SampleStream(mdp, rng, sampling, policy=None if control else policy, explore=explore)
    state = _initial_state(shape, init)
    counts = np.zeros(shape, dtype=np.int64)
    sch = _triple(schedules)
    gamma = mdp.gamma
    error = normalized_error_control if control else normalized_error_pe
    step_fn = {"td": td_step, "q": q_step}.get(algorithm)
    pid_fn = pid_q_step if control else pid_td_step

    result = RunResult(run_id, seed)
    grid = eval_grid(total_steps, eval_every)
    t = 0
    for target in grid:
        while t < target and not result.diverged:
            sample = stream.next(state.v)
            if pid:
                pid_fn(state, counts, sample, gamma, gains, sch)
            else:
                step_fn(state.v, counts, sample, gamma, sch.v)
            t += 1
        if not result.diverged and not (state.sup_norm() <= blowup):
            result.diverged = True
        result.steps.append(target)
        result.errors.append(math.inf if result.diverged else error(state.v, exact))
    result.final_state = state
    return result
