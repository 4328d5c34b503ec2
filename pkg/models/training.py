"""
Uniform train/predict entry points and finite-difference gradient checks.
"""

import logging
import time
from typing import Callable, Dict, Optional, Sequence, Tuple, Type

import numpy as np

from exceptions import InputError, TrainingError
from .base import Classifier, ModelKind, TrainConfig, TrainedModel, TrainingMeta, one_vs_rest_targets
from .forest import RandomForestClassifier
from .knn import KNNClassifier
from .linear import (
    LinearRegressionClassifier,
    LinearSVMClassifier,
    LogisticRegressionClassifier,
    augment,
    hinge_loss_grad,
    logistic_loss_grad,
)
from .mlp import MLPClassifier, glorot_init, mlp_forward, mlp_loss_grad
from .tree import DecisionTreeClassifier

logger = logging.getLogger(__name__)

REGISTRY: Dict[ModelKind, Type[Classifier]] = {
    ModelKind.LINEAR_REGRESSION: LinearRegressionClassifier,
    ModelKind.LOGISTIC_REGRESSION: LogisticRegressionClassifier,
    ModelKind.LINEAR_SVM: LinearSVMClassifier,
    ModelKind.KNN: KNNClassifier,
    ModelKind.DECISION_TREE: DecisionTreeClassifier,
    ModelKind.RANDOM_FOREST: RandomForestClassifier,
    ModelKind.MLP: MLPClassifier,
}

GRAD_CHECK_KINDS = frozenset({ModelKind.LOGISTIC_REGRESSION, ModelKind.MLP, ModelKind.LINEAR_SVM})


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D feature matrix, got {X.ndim} dimensions")
    return X


def _as_labels(y, n_rows: int, class_count: Optional[int]) -> Tuple[np.ndarray, int]:
    y = np.asarray(y)
    if y.ndim != 1 or y.size != n_rows:
        raise InputError(f"label vector of length {y.size} does not match {n_rows} rows")
    if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
        raise InputError("labels must be integer class indices")
    y = y.astype(np.int64)
    if class_count is None:
        class_count = max(2, int(y.max(initial=0)) + 1)
    if y.size and (y.min() < 0 or y.max() >= class_count):
        raise InputError(f"labels must lie in [0, {class_count})")
    return y, class_count


def train(
    kind,
    X,
    y,
    cfg: Optional[TrainConfig] = None,
    class_count: Optional[int] = None,
    feature_names: Optional[Sequence[str]] = None,
) -> TrainedModel:
    """
    Train one classifier.

    Args:
        kind: ModelKind (or its name)
        X: n x m feature matrix
        y: class indices
        cfg: Training settings; its kind is replaced by `kind`
        class_count: Number of classes (defaults to max label + 1, at least 2)
        feature_names: Optional column names recorded with the model

    Returns:
        TrainedModel with metadata; train_wall_time covers the fit only
    """
    kind = ModelKind(kind)
    X = _as_matrix(X)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise TrainingError(f"cannot train {kind.value} on an empty matrix {X.shape}")
    y, class_count = _as_labels(y, X.shape[0], class_count)
    if cfg is None:
        cfg = TrainConfig(kind=kind)
    elif cfg.kind != kind:
        cfg = cfg.model_copy(update={"kind": kind})
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise InputError(f"{len(feature_names)} feature names for {X.shape[1]} columns")

    estimator = REGISTRY[kind](cfg, class_count)
    started = time.perf_counter()
    epochs_run, stop_reason, history = estimator.fit(X, y)
    wall = time.perf_counter() - started

    train_accuracy = history[-1] if history else float(np.mean(estimator.predict(X) == y))
    logger.debug("%s trained in %.3fs (%d epochs, %s, train acc %.4f)",
                 kind.value, wall, epochs_run, stop_reason.value, train_accuracy)
    meta = TrainingMeta(
        epochs_run=epochs_run,
        stop_reason=stop_reason,
        train_wall_time=wall,
        train_accuracy=train_accuracy,
        history=list(history),
    )
    return TrainedModel(
        kind=kind,
        estimator=estimator,
        class_count=class_count,
        n_features=X.shape[1],
        meta=meta,
        config=cfg,
        feature_names=tuple(feature_names) if feature_names is not None else None,
    )


def predict(model: TrainedModel, X, feature_names: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Class indices for the rows of X.

    Args:
        model: Trained model
        X: n x m feature matrix
        feature_names: Column names of X; checked against the training columns when both are known

    Returns:
        Predicted class indices in [0, class_count)
    """
    model.check_features(feature_names)
    return model.predict(X)



def _numeric_gradient(loss: Callable[[], float], array: np.ndarray, step: float) -> np.ndarray:
    numeric = np.zeros_like(array)
    flat = array.reshape(-1)
    out = numeric.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = loss()
        flat[i] = original - step
        lower = loss()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * step)
    return numeric


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all components."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


def grad_check(kind, X, y, seed: int = 0, step: float = 1e-5, class_count: Optional[int] = None) -> float:
    """
    Compare analytic gradients with central differences at small random parameters.

    Rows that sit within reach of a kink (SVM margin near 1, a ReLU
    pre-activation near 0) are dropped first so the loss is smooth around
    the evaluation point.

    Returns:
        Maximum relative error over all parameters
    """
    kind = ModelKind(kind)
    if kind not in GRAD_CHECK_KINDS:
        raise InputError(f"gradient check is not defined for {kind.value}")
    X = _as_matrix(X)
    y, class_count = _as_labels(y, X.shape[0], class_count)
    rng = np.random.default_rng(seed)
    targets = one_vs_rest_targets(y, class_count)
    n_out = targets.shape[1]
    reach = 10.0 * step * (1.0 + float(np.abs(X).max(initial=0.0)))

    if kind is ModelKind.LOGISTIC_REGRESSION:
        params = {"W": rng.normal(0.0, 0.1, (X.shape[1], n_out)), "b": rng.normal(0.0, 0.1, n_out)}

        def evaluate():
            loss, gW, gb = logistic_loss_grad(params["W"], params["b"], X, targets)
            return loss, {"W": gW, "b": gb}

    elif kind is ModelKind.LINEAR_SVM:
        Xa = augment(X)
        signs = 2.0 * targets - 1.0
        params = {"W": rng.normal(0.0, 0.1, (Xa.shape[1], n_out))}
        margins = signs * (Xa @ params["W"])
        smooth = np.all(np.abs(margins - 1.0) > reach, axis=1)
        Xa, signs = Xa[smooth], signs[smooth]
        if Xa.shape[0] == 0:
            raise InputError("every row sits on the hinge; draw another seed")

        def evaluate():
            loss, grad = hinge_loss_grad(params["W"], Xa, signs, 1e-4)
            return loss, {"W": grad}

    else:
        params = glorot_init(X.shape[1], 100, n_out, rng)
        for name in params:
            params[name] *= 0.5
        hidden_pre, _ = mlp_forward(params, X)
        smooth = np.all(np.abs(hidden_pre) > reach, axis=1)
        X, targets = X[smooth], targets[smooth]
        if X.shape[0] == 0:
            raise InputError("every row sits on a ReLU kink; draw another seed")

        def evaluate():
            return mlp_loss_grad(params, X, targets, 1e-4)

    _, analytic = evaluate()
    worst = 0.0
    for name, array in params.items():
        numeric = _numeric_gradient(lambda: evaluate()[0], array, step)
        worst = max(worst, relative_error(analytic[name], numeric))
    return worst
