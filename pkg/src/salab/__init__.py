"""Truncation-stabilized stochastic approximation over controlled Markov chains."""

from .config import RunConfig, parse_config
from .core import StepSchedule, gamma_at, make_rng, shift
from .experiments import execute, run_experiment
from .stabilizer import run_sa_until_exit, run_stable_sa, sa_step

__all__ = [
    "RunConfig",
    "StepSchedule",
    "execute",
    "gamma_at",
    "make_rng",
    "parse_config",
    "run_experiment",
    "run_sa_until_exit",
    "run_stable_sa",
    "sa_step",
    "shift",
]
