"""GRU classifier, losses, training and the distilled forest.

Random search lives in :mod:`malproc_monitor.models.search`.
"""

from .distillation import distill, teacher_label, train_forest_direct
from .forest import DecisionTree, ForestClassifier, ForestConfig, forest_predict, train_forest
from .gru import GruClassifier, build_windows, gru_forward, predict_window
from .hyperparameters import Hyperparameters, SearchSpace
from .losses import LossFunction, modified_loss, mse_loss
from .optim import AdamState, adam_step
from .training import Trainer, train

__all__ = [
    "distill",
    "teacher_label",
    "train_forest_direct",
    "DecisionTree",
    "ForestClassifier",
    "ForestConfig",
    "forest_predict",
    "train_forest",
    "GruClassifier",
    "build_windows",
    "gru_forward",
    "predict_window",
    "Hyperparameters",
    "SearchSpace",
    "LossFunction",
    "modified_loss",
    "mse_loss",
    "AdamState",
    "adam_step",
    "Trainer",
    "train",
]
