"""Class-incremental protocol: schedules, losses, modes and the training driver."""

from .conflict import merge_task_predictions
from .engine import (
    IncrementalState,
    LossConfig,
    TrainConfig,
    evaluate,
    new_state,
    predict,
    run_experiment,
    train_task,
)
from .losses import cross_entropy, standard_kd_loss, task_ce_loss, unbiased_kd_loss
from .modes import TrainMode
from .schedule import Step, TaskSchedule, build_schedule, remap_labels, step_indices

__all__ = [
    "IncrementalState",
    "LossConfig",
    "Step",
    "TaskSchedule",
    "TrainConfig",
    "TrainMode",
    "build_schedule",
    "cross_entropy",
    "evaluate",
    "merge_task_predictions",
    "new_state",
    "predict",
    "remap_labels",
    "run_experiment",
    "standard_kd_loss",
    "step_indices",
    "task_ce_loss",
    "train_task",
    "unbiased_kd_loss",
]
