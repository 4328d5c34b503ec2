from .base import (
    ALL_KINDS,
    Classifier,
    Metrics,
    ModelKind,
    StopReason,
    TrainConfig,
    TrainedModel,
    TrainingMeta,
    accuracy,
)
from .persistence import load_model, save_model
from .training import grad_check, predict, train

__all__ = [
    "ALL_KINDS",
    "Classifier",
    "Metrics",
    "ModelKind",
    "StopReason",
    "TrainConfig",
    "TrainedModel",
    "TrainingMeta",
    "accuracy",
    "grad_check",
    "load_model",
    "predict",
    "save_model",
    "train",
]
