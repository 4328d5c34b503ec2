"""
Shared model types: kinds, training configuration, metrics and the epoch loop
every iterative learner runs under.
"""

import enum
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from exceptions import InputError, LayoutMismatchError, TrainingError

logger = logging.getLogger(__name__)


class ModelKind(str, enum.Enum):
    LINEAR_REGRESSION = "LinearRegression"
    LOGISTIC_REGRESSION = "LogisticRegression"
    LINEAR_SVM = "LinearSVM"
    KNN = "KNN"
    DECISION_TREE = "DecisionTree"
    RANDOM_FOREST = "RandomForest"
    MLP = "MLP"


ALL_KINDS: Tuple[ModelKind, ...] = tuple(ModelKind)

ITERATIVE_KINDS = frozenset({
    ModelKind.LINEAR_REGRESSION,
    ModelKind.LOGISTIC_REGRESSION,
    ModelKind.LINEAR_SVM,
    ModelKind.MLP,
})

DEFAULT_MAX_EPOCHS = {
    ModelKind.LINEAR_REGRESSION: 500,
    ModelKind.LOGISTIC_REGRESSION: 500,
    ModelKind.LINEAR_SVM: 200,
    ModelKind.MLP: 200,
}

DEFAULT_LEARNING_RATE = {
    ModelKind.LINEAR_REGRESSION: 0.1,
    ModelKind.LOGISTIC_REGRESSION: 0.1,
    ModelKind.MLP: 1e-3,
}


class StopReason(str, enum.Enum):
    TARGET_REACHED = "target_reached"
    PLATEAU = "plateau"
    MAX_EPOCHS = "max_epochs"
    NONITERATIVE = "noniterative"


class TrainConfig(BaseModel):
    """Training settings for one model kind; unset knobs fall back to per-kind defaults."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ModelKind
    seed: int = 42
    max_epochs: Optional[int] = Field(default=None, ge=1)
    target_accuracy: float = Field(default=0.90, gt=0.0, le=1.0)
    min_improvement: float = Field(default=0.01, ge=0.0)
    patience: int = Field(default=10, ge=1)
    learning_rate: Optional[float] = Field(default=None, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    svm_lambda: float = Field(default=1e-4, gt=0.0)
    svm_batch_size: int = Field(default=1, ge=1)
    k_neighbors: int = Field(default=5, ge=1)
    n_trees: int = Field(default=100, ge=1)
    bootstrap: bool = True
    max_features: Union[Literal["sqrt", "all"], int] = "sqrt"
    max_depth: Optional[int] = Field(default=None, ge=1)
    hidden_units: int = Field(default=100, ge=1)
    batch_size: int = Field(default=200, ge=1)
    l2_mlp: float = Field(default=1e-4, ge=0.0)
    n_jobs: int = Field(default=1, ge=1)

    def epoch_limit(self) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        return DEFAULT_MAX_EPOCHS.get(self.kind, 1)

    def step_size(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATE.get(self.kind, 0.1)


class TrainingMeta(BaseModel):
    epochs_run: int
    stop_reason: StopReason
    train_wall_time: float
    train_accuracy: float
    history: List[float] = []


class Metrics(BaseModel):
    """Accuracy plus confusion matrix (rows = truth, columns = prediction)."""
    accuracy: float
    confusion: List[List[int]]


def accuracy(pred, truth, class_count: Optional[int] = None) -> Metrics:
    """
    Compare predictions with ground truth.

    Args:
        pred: Predicted class indices
        truth: True class indices
        class_count: Size of the confusion matrix (defaults to max label + 1, at least 2)

    Returns:
        Metrics with accuracy = trace / sum of the confusion matrix
    """
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise InputError(f"prediction length {pred.size} does not match truth length {truth.size}")
    if class_count is None:
        top = max(int(pred.max(initial=0)), int(truth.max(initial=0)))
        class_count = max(2, top + 1)
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    total = int(confusion.sum())
    acc = float(np.trace(confusion) / total) if total else 0.0
    return Metrics(accuracy=acc, confusion=confusion.tolist())


class StoppingMonitor:
    """
    Tracks per-epoch training accuracy and decides when to stop.

    Stops on the target accuracy, after `patience` consecutive epochs whose
    absolute improvement is below `min_improvement`, or at the epoch limit.
    """

    def __init__(self, cfg: TrainConfig):
        self.target = cfg.target_accuracy
        self.min_improvement = cfg.min_improvement
        self.patience = cfg.patience
        self.max_epochs = cfg.epoch_limit()
        self.history: List[float] = []
        self._stale = 0

    def observe(self, acc: float) -> Optional[StopReason]:
        self.history.append(acc)
        if acc >= self.target:
            return StopReason.TARGET_REACHED
        if len(self.history) > 1:
            if acc - self.history[-2] < self.min_improvement:
                self._stale += 1
            else:
                self._stale = 0
            if self._stale >= self.patience:
                return StopReason.PLATEAU
        if len(self.history) >= self.max_epochs:
            return StopReason.MAX_EPOCHS
        return None


FitOutcome = Tuple[int, StopReason, List[float]]


class Classifier(ABC):
    """Common interface of the seven learners."""

    kind: ClassVar[ModelKind]

    def __init__(self, cfg: TrainConfig, class_count: int):
        self.cfg = cfg
        self.class_count = class_count

    @property
    def n_outputs(self) -> int:
        # Binary problems use one score column, multi-class one per class.
        return 1 if self.class_count == 2 else self.class_count

    @abstractmethod
    def fit(self, X: np.ndarray, y: np.ndarray) -> FitOutcome:
        ...

    @abstractmethod
    def predict(self, X: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def get_params(self) -> Dict[str, Any]:
        ...

    @abstractmethod
    def set_params(self, params: Dict[str, Any]) -> None:
        ...


class IterativeClassifier(Classifier):
    """Classifier trained epoch by epoch under StoppingMonitor."""

    def fit(self, X: np.ndarray, y: np.ndarray) -> FitOutcome:
        if np.unique(y).size < 2:
            raise TrainingError(f"{self.kind.value} needs at least two classes in the training labels")
        rng = np.random.default_rng(self.cfg.seed)
        self._initialize(X, y, rng)
        monitor = StoppingMonitor(self.cfg)
        try:
            while True:
                self._epoch(rng)
                reason = monitor.observe(float(np.mean(self.predict(X) == y)))
                if reason is not None:
                    break
        finally:
            self._release()
        if reason is StopReason.PLATEAU and monitor.history[-1] < self.cfg.target_accuracy:
            logger.debug("%s plateaued at %.4f after %d epochs", self.kind.value,
                        monitor.history[-1], len(monitor.history))
        return len(monitor.history), reason, monitor.history

    @abstractmethod
    def _initialize(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        ...

    @abstractmethod
    def _epoch(self, rng: np.random.Generator) -> None:
        ...

    def _release(self) -> None:
        """Drop per-fit caches."""


def one_vs_rest_targets(y: np.ndarray, class_count: int) -> np.ndarray:
    """0/1 target matrix: one column for binary tasks, one per class otherwise."""
    y = np.asarray(y, dtype=np.int64)
    if class_count == 2:
        return y.astype(np.float64)[:, None]
    targets = np.zeros((y.size, class_count))
    targets[np.arange(y.size), y] = 1.0
    return targets


def decide(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Binary threshold on a single score column, argmax otherwise."""
    if scores.shape[1] == 1:
        return (scores[:, 0] >= threshold).astype(np.int64)
    return np.argmax(scores, axis=1).astype(np.int64)


@dataclass(frozen=True)
class TrainedModel:
    kind: ModelKind
    estimator: Classifier
    class_count: int
    n_features: int
    meta: TrainingMeta
    config: TrainConfig
    feature_names: Optional[Tuple[str, ...]] = None

    def check_features(self, names: Optional[Sequence[str]]) -> None:
        """Raise LayoutMismatchError unless `names` match the training columns in order."""
        if names is None or self.feature_names is None:
            return
        names = tuple(names)
        if names == self.feature_names:
            return
        if len(names) != len(self.feature_names):
            raise LayoutMismatchError(
                f"{self.kind.value} was trained on {len(self.feature_names)} features, got {len(names)}"
            )
        position = next(i for i, (a, b) in enumerate(zip(self.feature_names, names)) if a != b)
        raise LayoutMismatchError(
            f"{self.kind.value} expects feature '{self.feature_names[position]}' at column {position}, "
            f"the table has '{names[position]}'"
        )

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            got = X.shape[1] if X.ndim == 2 else X.ndim
            raise LayoutMismatchError(
                f"{self.kind.value} was trained on {self.n_features} features, got {got}"
            )
        return self.estimator.predict(X)
