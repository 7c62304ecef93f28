"""Spectral and statistical analysis of PID VI / PID TD.

The PID VI operator is affine, ``L(W) = A W + b`` on the stacked iterate
``W = [V; z; V_prev]``.  PID VI converges iff ``rho(A) < 1``; the limiting ODE
of PID TD is stable iff every eigenvalue of ``A`` has real part below 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import eigen
from .mdp import TabularMdp, check_policy, policy_kernel, reward_variance
from .planning import Gains, PidState, pid_vi_step_pe

eigenvalues = eigen.eigenvalues


@dataclass(frozen=True)
class PidMatrix:
    A: np.ndarray
    b: np.ndarray

    def apply(self, stacked) -> np.ndarray:
        return self.A @ stacked + self.b


@dataclass(frozen=True)
class SpectralReport:
    spectral_radius: float
    max_real_part: float
    eigenvalues: np.ndarray
    vi_convergent: bool
    td_convergent: bool

    def to_dict(self) -> dict:
        return {
            "spectral_radius": self.spectral_radius,
            "max_real_part": self.max_real_part,
            "vi_convergent": self.vi_convergent,
            "td_convergent": self.td_convergent,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }


@dataclass(frozen=True)
class DeterminismReport:
    d: float
    reward_term: float
    transition_term: float


def build_pid_matrix(mdp: TabularMdp, policy, gains: Gains) -> PidMatrix:
    n = mdp.n_states
    P = policy_kernel(mdp, policy)
    g = mdp.gamma
    kp, ki, kd, alpha, beta = gains.as_tuple()
    eye = np.eye(n)
    zero = np.zeros((n, n))
    A = np.block([
        [(1 - kp + kd - ki * alpha) * eye + g * (kp + ki * alpha) * P, beta * ki * eye, -kd * eye],
        [-alpha * eye + g * alpha * P, beta * eye, zero],
        [eye, zero, zero],
    ])
    b = pid_vi_step_pe(mdp, policy, gains, PidState.zeros(n)).stacked()
    return PidMatrix(A, b)


def spectral_report(mdp: TabularMdp, policy, gains: Gains) -> SpectralReport:
    lam = eigenvalues(build_pid_matrix(mdp, policy, gains).A)
    rho = float(np.max(np.abs(lam)))
    max_re = float(np.max(lam.real))
    return SpectralReport(rho, max_re, lam, rho < 1.0, max_re < 1.0)


def spectral_radius(matrix) -> float:
    return float(np.max(np.abs(eigenvalues(matrix))))


def gelfand_radius_estimate(matrix, k: int = 20) -> float:
    """``||A^(2^k)||_inf^(1/2^k)`` by repeated squaring, renormalizing each
    step so the powers never overflow or underflow."""
    if k < 1:
        raise ValueError("k must be at least 1")
    B = np.asarray(matrix, dtype=float)
    nrm = np.max(np.sum(np.abs(B), axis=1))
    if nrm == 0.0:
        return 0.0
    B = B / nrm
    log_scale = math.log(nrm)
    for _ in range(k):
        B = B @ B
        nrm = np.max(np.sum(np.abs(B), axis=1))
        if nrm == 0.0:
            return 0.0
        B /= nrm
        log_scale = 2.0 * log_scale + math.log(nrm)
    return math.exp(log_scale / 2.0**k)


def d_determinism(mdp: TabularMdp, policy, reward_noise: str = "transition") -> DeterminismReport:
    """Largest d with Var[R^pi(x)] <= (1-d)/4 and max_x' P^pi(x'|x) >= d.

    ``reward_noise="transition"`` measures reward variance given the
    transition ``(x, a, x')``, which is zero for tensor rewards: the
    randomness of ``x'`` is charged to the transition term only.
    ``"marginal"`` uses the variance of the reward received from ``x``
    including the randomness of the action and next state.
    """
    pi = check_policy(mdp, policy)
    if reward_noise == "transition":
        var = np.zeros(mdp.n_states)
    elif reward_noise == "marginal":
        var = reward_variance(mdp, pi)
    else:
        raise ValueError(f"unknown reward_noise mode {reward_noise!r}")
    reward_term = float(np.min(1.0 - 4.0 * var))
    transition_term = float(np.min(np.max(policy_kernel(mdp, pi), axis=1)))
    d = min(max(0.0, min(reward_term, transition_term)), 1.0)
    return DeterminismReport(d, reward_term, transition_term)


def _check_d(d):
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d must lie in [0, 1], got {d}")


def noise_constant(gains: Gains) -> float:
    """max((kp + ki alpha)^2, alpha^2)."""
    return max((gains.kappa_p + gains.kappa_i * gains.alpha) ** 2, gains.alpha**2)


def noise_bound_scalar(d: float, gamma: float, v_inf: float) -> float:
    """Bound on E[W^2] for the one-sample TD noise at a single state."""
    _check_d(d)
    return (1.0 - d) / 4.0 + 5.0 * gamma**2 * (1.0 - d) * v_inf**2


def noise_bound_td(d: float, n: int, gamma: float, v_inf: float) -> float:
    return n * noise_bound_scalar(d, gamma, v_inf)


def noise_bound_pid(d: float, n: int, gamma: float, gains: Gains, vtilde_inf: float) -> float:
    return 3 * n * noise_constant(gains) * noise_bound_scalar(d, gamma, vtilde_inf)


def prop1_ratio_td(v0_err_inf, v_inf, n, gamma, d) -> float:
    """Lower bound on the ratio of optimization to statistical error at t = 0
    for synchronous TD."""
    _check_d(d)
    if d == 1.0:
        return math.inf
    num = v0_err_inf**2 * (5 * gamma**2 * n * (1 - d) + 2)
    den = math.e * n * (1 - d) * (1 + 40 * gamma**2 * v_inf**2)
    return num / den


def prop1_ratio_pid(v0_err_inf, v_inf, n, gamma, d, gains: Gains) -> float:
    _check_d(d)
    if d == 1.0:
        return math.inf
    c = noise_constant(gains)
    num = v0_err_inf**2 * (15 * c * gamma**2 * n * (1 - d) + 2)
    den = 3 * math.e * c * n * (1 - d) * (1 + 40 * gamma**2 * v_inf**2)
    return num / den


def theorem2_bound(c2, c3, c4, epsilon, T, rate, v0_err_inf, v_inf, t) -> tuple[float, float]:
    """(optimization, statistical) terms of the synchronous error bound under
    mu(t) = epsilon / (t + T).

    ``rate`` is gamma for TD and rho(A) for PID TD; pass ``gamma + delta`` or
    ``rho + delta`` for the non-diagonalizable variant.  The constants
    c2, c3, c4 are caller-supplied.
    """
    if not epsilon * (1.0 - rate) > 1.0:
        raise ValueError(f"requires epsilon * (1 - rate) > 1, got {epsilon} * (1 - {rate}) = {epsilon * (1 - rate)}")
    opt = c2 * v0_err_inf**2 * (T / (t + T)) ** (epsilon * (1.0 - rate))
    stat = epsilon * (c3 + c4 * v_inf**2) / (epsilon * (1.0 - rate) - 1.0) * (epsilon / (t + T))
    return opt, stat


def scan_gains(mdp: TabularMdp, policy, kp_grid, ki_grid, kd_grid, alpha=0.05, beta=0.95):
    """Spectral report for every point of a gain grid, as (Gains, report) pairs."""
    out = []
    for kp in kp_grid:
        for ki in ki_grid:
            for kd in kd_grid:
                g = Gains(float(kp), float(ki), float(kd), alpha, beta)
                out.append((g, spectral_report(mdp, policy, g)))
    return out
