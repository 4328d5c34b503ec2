"""Occlusion sensitivity and top-k masking."""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel
from tqdm import tqdm

from config import OcclusionBaseline, OcclusionConfig, Task
from exceptions import InputError, LayoutMismatchError
from models import ModelKind, TrainedModel

logger = logging.getLogger(__name__)

Layout = Mapping[str, Sequence[int]]


class GroupSensitivity(BaseModel):
    group: str
    occluded_accuracy: float
    degradation: float


class SensitivityReport(BaseModel):
    model: ModelKind
    task: Task
    baseline: OcclusionBaseline
    baseline_accuracy: float
    groups: List[GroupSensitivity]
    ranking: List[str]

    def degradation_of(self, group: str) -> float:
        for entry in self.groups:
            if entry.group == group:
                return entry.degradation
        raise LayoutMismatchError(f"group '{group}' was not swept")

    def top(self, k: int) -> List[str]:
        return self.ranking[:k]


class MaskingReport(BaseModel):
    model: ModelKind
    task: Task
    masked: List[str]
    k: int
    accuracy_before: float
    accuracy_after: float
    degradation: float


def _columns_for(layout: Layout, groups: Iterable[str]) -> List[int]:
    columns = set()
    for name in groups:
        if name not in layout:
            raise LayoutMismatchError(f"unknown feature group '{name}'")
        columns.update(layout[name])
    return sorted(columns)


def occlude(X, layout: Layout, groups: Iterable[str], cfg: Optional[OcclusionConfig], train_means) -> np.ndarray:
    """
    Copy of X with the columns of `groups` replaced by the baseline.

    train_mean writes the training-column means, zero writes 0 and permute
    shuffles the group's rows jointly with a generator seeded by permute_seed.
    Listing a group more than once is the same as listing it once.
    """
    cfg = cfg or OcclusionConfig()
    X = np.array(X, dtype=np.float64, copy=True)
    columns = _columns_for(layout, groups)
    if columns and columns[-1] >= X.shape[1]:
        raise LayoutMismatchError(f"layout refers to column {columns[-1]} of a {X.shape[1]}-column matrix")
    if not columns:
        return X
    if cfg.baseline is OcclusionBaseline.TRAIN_MEAN:
        means = np.asarray(train_means, dtype=np.float64)
        if means.shape != (X.shape[1],):
            raise LayoutMismatchError(f"{means.size} training means for {X.shape[1]} columns")
        X[:, columns] = means[columns]
    elif cfg.baseline is OcclusionBaseline.ZERO:
        X[:, columns] = 0.0
    else:
        order = np.random.default_rng(cfg.permute_seed).permutation(X.shape[0])
        X[:, columns] = X[order][:, columns]
    return X


def _accuracy(model: TrainedModel, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(X) == y)) if y.size else 0.0


def _infer_task(model: TrainedModel) -> Task:
    return Task.BINARY if model.class_count == 2 else Task.MULTICLASS


def sensitivity(
    m: TrainedModel,
    X_test,
    y_test,
    layout: Layout,
    train_means,
    cfg: Optional[OcclusionConfig] = None,
    workers: int = 1,
    task: Optional[Task] = None,
    progress: bool = False,
    feature_names: Optional[Sequence[str]] = None,
) -> SensitivityReport:
    """
    Occlude one feature group at a time and measure the accuracy drop.

    The model is never retrained; negative degradations (occlusion helped)
    are kept as they are. Groups run in parallel when workers > 1 and the
    report keeps layout order either way.
    When `feature_names` are given they must match the columns the model
    was trained on.
    """
    m.check_features(feature_names)
    cfg = cfg or OcclusionConfig()
    X_test = np.asarray(X_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.int64)
    groups = list(cfg.groups) if cfg.groups is not None else list(layout)
    if not groups:
        raise InputError("no feature groups to occlude")
    _columns_for(layout, groups)

    baseline_accuracy = _accuracy(m, X_test, y_test)

    def occluded_accuracy(group: str) -> float:
        return _accuracy(m, occlude(X_test, layout, [group], cfg, train_means), y_test)

    results: Dict[str, float] = {}
    bar = tqdm(total=len(groups), desc=f"occlusion {m.kind.value}", disable=not progress, leave=False)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(occluded_accuracy, group): group for group in groups}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                bar.update(1)
    else:
        for group in groups:
            results[group] = occluded_accuracy(group)
            bar.update(1)
    bar.close()

    entries = [
        GroupSensitivity(group=g, occluded_accuracy=results[g], degradation=baseline_accuracy - results[g])
        for g in groups
    ]
    order = sorted(range(len(entries)), key=lambda i: (-entries[i].degradation, i))
    report = SensitivityReport(
        model=m.kind,
        task=task or _infer_task(m),
        baseline=cfg.baseline,
        baseline_accuracy=baseline_accuracy,
        groups=entries,
        ranking=[entries[i].group for i in order],
    )
    logger.debug("%s sensitivity: top group %s (%.4f)", m.kind.value, report.ranking[0],
                 entries[order[0]].degradation)
    return report


def mask_topk(
    m: TrainedModel,
    X_test,
    y_test,
    base: SensitivityReport,
    layout: Layout,
    train_means,
    k: int = 2,
    cfg: Optional[OcclusionConfig] = None,
) -> MaskingReport:
    """Occlude the k highest-ranked groups of `base` together."""
    if k < 0:
        raise InputError(f"k must be non-negative, got {k}")
    if k > len(base.ranking):
        raise InputError(f"cannot mask {k} groups, only {len(base.ranking)} were swept")
    X_test = np.asarray(X_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.int64)
    masked = base.top(k)
    before = _accuracy(m, X_test, y_test)
    after = _accuracy(m, occlude(X_test, layout, masked, cfg, train_means), y_test) if k else before
    return MaskingReport(
        model=m.kind,
        task=base.task,
        masked=masked,
        k=k,
        accuracy_before=before,
        accuracy_after=after,
        degradation=before - after,
    )


def degradation_table(reports: Iterable[SensitivityReport]) -> pd.DataFrame:
    """One row per (model, group) with both accuracies, the degradation and its rank."""
    rows = []
    for report in reports:
        rank = {group: position + 1 for position, group in enumerate(report.ranking)}
        for entry in report.groups:
            rows.append({
                "model": report.model.value,
                "task": report.task.value,
                "group": entry.group,
                "baseline_accuracy": report.baseline_accuracy,
                "occluded_accuracy": entry.occluded_accuracy,
                "degradation": entry.degradation,
                "rank": rank[entry.group],
            })
    columns = ["model", "task", "group", "baseline_accuracy", "occluded_accuracy", "degradation", "rank"]
    return pd.DataFrame(rows, columns=columns)
