"""Correlation-based feature selection over feature groups."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from config import Task
from exceptions import InputError, SelectionError
from services.data import DataTable

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.3


def pearson(x, y) -> float:
    """
    Pearson correlation coefficient.

    Args:
        x: First sample
        y: Second sample of the same length

    Returns:
        r in [-1, 1]; 0.0 when either sample is constant
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise InputError(f"samples differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputError("correlation needs at least two observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / (np.sqrt(np.dot(dx, dx)) * np.sqrt(np.dot(dy, dy))))
    return min(1.0, max(-1.0, r))


def _unit_columns(X: np.ndarray) -> np.ndarray:
    """Centre every column and scale it to unit norm; constant columns become 0."""
    centred = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centred, centred))
    varying = np.ptp(X, axis=0) > 0
    unit = np.zeros_like(centred)
    unit[:, varying] = centred[:, varying] / norms[varying]
    return unit


@dataclass(frozen=True)
class CorrelationReport:
    feature_names: Tuple[str, ...]
    matrix: np.ndarray
    groups: Dict[str, Tuple[int, ...]]
    feature_binary: np.ndarray
    feature_multiclass: np.ndarray
    binary_scores: Dict[str, float]
    multiclass_scores: Dict[str, float]

    def scores(self, mode) -> Dict[str, float]:
        return self.binary_scores if Task(mode) is Task.BINARY else self.multiclass_scores


def correlation_matrix(t: DataTable, rows=None) -> CorrelationReport:
    """
    Feature-feature and feature-label correlations.

    Args:
        t: Encoded table
        rows: Optional row subset (the training rows)

    Returns:
        CorrelationReport; the multi-class score of a column is its largest
        |r| against the one-vs-rest class indicators, and a group scores the
        maximum over its member columns
    """
    if rows is not None:
        t = t.take(rows)
    if t.n_rows < 2:
        raise InputError("correlation needs at least two rows")
    Z = _unit_columns(t.matrix)
    matrix = np.clip(Z.T @ Z, -1.0, 1.0)
    matrix = (matrix + matrix.T) / 2.0
    np.fill_diagonal(matrix, 1.0)

    binary = np.abs(Z.T @ _unit_columns(t.y_binary.astype(np.float64)[:, None]))[:, 0]
    indicators = np.zeros((t.n_rows, len(t.class_names)))
    indicators[np.arange(t.n_rows), t.y_multi] = 1.0
    multiclass = np.abs(Z.T @ _unit_columns(indicators)).max(axis=1)
    binary = np.minimum(binary, 1.0)
    multiclass = np.minimum(multiclass, 1.0)

    def group_scores(per_column: np.ndarray) -> Dict[str, float]:
        return {name: float(per_column[list(cols)].max()) for name, cols in t.groups.items()}

    matrix.setflags(write=False)
    return CorrelationReport(
        feature_names=t.feature_names,
        matrix=matrix,
        groups=dict(t.groups),
        feature_binary=binary,
        feature_multiclass=multiclass,
        binary_scores=group_scores(binary),
        multiclass_scores=group_scores(multiclass),
    )


class FeatureSelection(BaseModel):
    mode: Task
    threshold: float
    kept: List[str]
    dropped: Dict[str, float]
    scores: Dict[str, float]


def select_features(rep: CorrelationReport, threshold: float = DEFAULT_THRESHOLD, mode=Task.BINARY) -> FeatureSelection:
    """Keep every group whose label correlation is at least `threshold`."""
    if not 0.0 < threshold < 1.0:
        raise InputError(f"selection threshold must lie strictly between 0 and 1, got {threshold}")
    mode = Task(mode)
    scores = rep.scores(mode)
    kept = [name for name, score in scores.items() if score >= threshold]
    dropped = {name: score for name, score in scores.items() if score < threshold}
    if not kept:
        best = max(scores.values(), default=0.0)
        raise SelectionError(
            f"no feature group reaches |r| >= {threshold} for the {mode.value} task "
            f"(best is {best:.4f}); lower the threshold"
        )
    logger.info("%s selection at %.2f keeps %d of %d groups", mode.value, threshold, len(kept), len(scores))
    return FeatureSelection(mode=mode, threshold=threshold, kept=kept, dropped=dropped, scores=dict(scores))


def apply_selection(table: DataTable, selection: Optional[FeatureSelection]) -> DataTable:
    if selection is None:
        return table
    return table.with_groups(selection.kept)
