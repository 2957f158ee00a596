"""
Hyperband hyperparameter search driving the training engine.
"""

from .hyperband import (
    Bracket,
    HyperbandPlan,
    HyperbandResult,
    ObjectiveResult,
    Rung,
    Trial,
    hyperband_schedule,
    run_hyperband,
)
from .objective import TrainingObjective
from .report import read_tuning_report, tuning_report, write_tuning_report
from .space import SearchSpace, log_uniform, sample_config

__all__ = [
    "Bracket",
    "HyperbandPlan",
    "HyperbandResult",
    "ObjectiveResult",
    "Rung",
    "SearchSpace",
    "Trial",
    "TrainingObjective",
    "hyperband_schedule",
    "log_uniform",
    "read_tuning_report",
    "run_hyperband",
    "sample_config",
    "tuning_report",
    "write_tuning_report",
]
