"""Loss objectives with the optimisers and schedules that minimise them."""
from .log import TrainLog
from .objective import Objective, default_trainable, required_fields
from .optimizers import LBFGS, Adam, AdamState, LineSearchStall, adam_step
from .schedules import (TrainConfig, TrainingDiverged, material_for_ratio, sequential_plan,
                        train_coupled, train_parametric, train_sequential)

__all__ = [
    "Adam", "AdamState", "LBFGS", "LineSearchStall", "Objective", "TrainConfig", "TrainLog",
    "TrainingDiverged", "adam_step", "default_trainable", "material_for_ratio",
    "required_fields", "sequential_plan", "train_coupled", "train_parametric", "train_sequential",
]
