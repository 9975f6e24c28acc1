"""Desirability-function control of stochastic systems via Feynman-Kac path sampling."""
from ._accel import backend, numba_enabled, set_backend
from .cost import CostSpec, make_cost
from .dynamics import SystemModel, make_system
from .errors import FKControlError
from .lqg import lq_problem_from, oracle_desirability, solve_riccati
from .policy import PolicyHandle, closed_loop_rollout, evaluate_cost, policy_eval
from .regression import DesirabilityModel, TrainConfig, train
from .sampler import RolloutConfig, estimate_desirability, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "CostSpec", "DesirabilityModel", "FKControlError", "PolicyHandle", "RolloutConfig",
    "SystemModel", "TrainConfig", "backend", "closed_loop_rollout", "estimate_desirability",
    "evaluate_cost", "generate_dataset", "lq_problem_from", "make_cost", "make_system",
    "numba_enabled", "oracle_desirability", "policy_eval", "set_backend", "solve_riccati", "train",
]
