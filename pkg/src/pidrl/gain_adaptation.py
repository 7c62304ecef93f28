"""Sample-based gain adaptation for PID TD Learning and PID Q-Learning.

Each step the controller gains take a normalized semi-gradient step on the
squared one-sample Bellman residual at the visited state.  The normalizer is
an exponential moving average of squared TD errors per state (or pair), and
the derivative uses the value table as it was at the previous visit of that
state (``previous``).  Step order within one sample:

1. TD errors ``delta'`` (previous table) and ``delta`` (current table)
2. gain update
3. running residual / previous-table bookkeeping
4. PID value update with the new gains
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learning import (
    RunResult,
    SampleStream,
    _initial_state,
    _triple,
    eval_grid,
    normalized_error_control,
    normalized_error_pe,
    pid_q_step,
    pid_td_step,
)
from .mdp import TabularMdp, TransitionSample
from .planning import BLOWUP, Gains


@dataclass(frozen=True)
class GainAdaptationConfig:
    eta: float = 0.0
    lam: float = 0.5
    eps_norm: float = 1e-20
    initial: Gains = Gains(1.0, 0.0, 0.0, 0.05, 0.95)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.eps_norm <= 0:
            raise ValueError("eps_norm must be positive")


@dataclass
class AdapterState:
    running_br: np.ndarray
    previous: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "AdapterState":
        return cls(np.zeros(shape), np.zeros(shape))


def _apply(gains: Gains, scale, g_p, g_i, g_d) -> Gains:
    return gains.with_controller(gains.kappa_p + scale * g_p,
                                 gains.kappa_i + scale * g_i,
                                 gains.kappa_d + scale * g_d)


def ga_td_gain_update(gains: Gains, adapter: AdapterState, sample: TransitionSample,
                      V, z, V_prev, config: GainAdaptationConfig, gamma: float) -> Gains:
    x, x_next, r = sample.x, sample.x_next, sample.r
    prev = adapter.previous
    delta_old = r + gamma * prev[x_next] - prev[x]
    delta = r + gamma * V[x_next] - V[x]
    scale = config.eta * delta / (adapter.running_br[x] + config.eps_norm)
    return _apply(gains, scale,
                  delta_old,
                  gains.beta * z[x] + gains.alpha * delta_old,
                  V[x] - V_prev[x])


def ga_q_gain_update(gains: Gains, adapter: AdapterState, sample: TransitionSample,
                     Q, z, Q_prev, config: GainAdaptationConfig, gamma: float) -> Gains:
    x, a, x_next, r = sample.x, sample.a, sample.x_next, sample.r
    a_next = int(np.argmax(Q[x_next]))
    prev = adapter.previous
    delta_old = r + gamma * prev[x_next, a_next] - prev[x, a]
    delta = r + gamma * Q[x_next, a_next] - Q[x, a]
    scale = config.eta * delta / (adapter.running_br[x, a] + config.eps_norm)
    return _apply(gains, scale,
                  delta_old,
                  gains.beta * z[x, a] + gains.alpha * delta_old,
                  Q[x, a] - Q_prev[x, a])


def adapter_commit(adapter: AdapterState, idx, delta: float, V, config: GainAdaptationConfig) -> AdapterState:
    """Fold ``delta^2`` into the running residual at ``idx`` and remember the
    pre-update value there (in place)."""
    adapter.running_br[idx] = (1.0 - config.lam) * adapter.running_br[idx] + config.lam * delta * delta
    adapter.previous[idx] = V[idx]
    return adapter


@np.errstate(over="ignore", invalid="ignore")  # blow-ups are recorded, not raised
def _run_ga(mdp, policy, control, config, schedules, total_steps, eval_every, rng, exact,
            sampling, init, run_id, seed, blowup, explore):
    sampling = sampling or ("iid-state-action" if control else "iid-state")
    shape = (mdp.n_states, mdp.n_actions) if control else (mdp.n_states,)
    stream = SampleStream(mdp, rng, sampling, policy=None if control else policy, explore=explore)
    state = _initial_state(shape, init)
    counts = np.zeros(shape, dtype=np.int64)
    adapter = AdapterState.zeros(shape)
    sch = _triple(schedules)
    gamma = mdp.gamma
    gains = config.initial
    error = normalized_error_control if control else normalized_error_pe
    gain_update = ga_q_gain_update if control else ga_td_gain_update
    value_step = pid_q_step if control else pid_td_step

    result = RunResult(run_id, seed)
    t = 0
    for target in eval_grid(total_steps, eval_every):
        while t < target and not result.diverged:
            sample = stream.next(state.v)
            if config.eta != 0.0:
                try:
                    gains = gain_update(gains, adapter, sample, state.v, state.z, state.v_prev, config, gamma)
                except ValueError:  # gains overflowed
                    result.diverged = True
                    break
            idx = (sample.x, sample.a) if control else sample.x
            if control:
                delta = sample.r + gamma * state.v[sample.x_next].max() - state.v[idx]
            else:
                delta = sample.r + gamma * state.v[sample.x_next] - state.v[idx]
            adapter_commit(adapter, idx, delta, state.v, config)
            value_step(state, counts, sample, gamma, gains, sch)
            t += 1
        if not result.diverged and not state.sup_norm() <= blowup:
            result.diverged = True
        result.steps.append(target)
        result.errors.append(np.inf if result.diverged else error(state.v, exact))
        result.gains.append((gains.kappa_p, gains.kappa_i, gains.kappa_d))
    result.final_state = state
    return result


def run_pid_td_with_ga(mdp: TabularMdp, policy, config: GainAdaptationConfig, schedules,
                       total_steps: int, eval_every: int, rng: np.random.Generator, exact,
                       sampling: str | None = None, init=None, run_id: int = 0, seed: int = 0,
                       blowup: float = BLOWUP, explore: float = 0.1) -> RunResult:
    """PID TD Learning with gain adaptation; records gains at every evaluation."""
    return _run_ga(mdp, policy, False, config, schedules, total_steps, eval_every, rng, exact,
                   sampling, init, run_id, seed, blowup, explore)


def run_pid_q_with_ga(mdp: TabularMdp, config: GainAdaptationConfig, schedules, sampling,
                      total_steps: int, eval_every: int, rng: np.random.Generator, exact,
                      init=None, run_id: int = 0, seed: int = 0,
                      blowup: float = BLOWUP, explore: float = 0.1) -> RunResult:
    """PID Q-Learning with gain adaptation."""
    return _run_ga(mdp, None, True, config, schedules, total_steps, eval_every, rng, exact,
                   sampling, init, run_id, seed, blowup, explore)
