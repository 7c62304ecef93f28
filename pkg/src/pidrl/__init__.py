"""PID-accelerated planning and learning for tabular MDPs."""
from .analysis import build_pid_matrix, d_determinism, spectral_report
from .environments import GarnetSpec, chain_walk, cliff_walk, garnet, make_environment
from .gain_adaptation import GainAdaptationConfig, run_pid_q_with_ga, run_pid_td_with_ga
from .learning import CountCap, Constant, Polynomial, ScheduleTriple, run_learning
from .mdp import TabularMdp, exact_value_control, exact_value_pe
from .planning import Gains, PidState, pid_vi_run

__version__ = "0.1.0"

__all__ = [
    "CountCap", "Constant", "GainAdaptationConfig", "Gains", "GarnetSpec", "PidState",
    "Polynomial", "ScheduleTriple", "TabularMdp", "build_pid_matrix", "chain_walk",
    "cliff_walk", "d_determinism", "exact_value_control", "exact_value_pe", "garnet",
    "make_environment", "pid_vi_run", "run_learning", "run_pid_q_with_ga",
    "run_pid_td_with_ga", "spectral_report",
]
