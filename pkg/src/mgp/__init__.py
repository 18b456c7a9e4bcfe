"""Model-based posterior sampling for two-player zero-sum Markov games."""

from .core import (
    FomgModel,
    HistoryPolicy,
    HistoryTree,
    MarkovJointPolicy,
    ModelClass,
    ModelError,
    PomgModel,
    Trajectory,
    enumerate_histories,
)
from .learners import LearnerConfig, RegretTrace, make_adversary, run_adversarial, run_selfplay
from .matrix_game import MatrixGameSolution, solve_matrix_game

__all__ = [
    "FomgModel",
    "HistoryPolicy",
    "HistoryTree",
    "LearnerConfig",
    "MarkovJointPolicy",
    "MatrixGameSolution",
    "ModelClass",
    "ModelError",
    "PomgModel",
    "RegretTrace",
    "Trajectory",
    "enumerate_histories",
    "make_adversary",
    "run_adversarial",
    "run_selfplay",
    "solve_matrix_game",
]
