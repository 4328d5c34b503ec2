"""
Experiment runners.

Each runner takes an ExperimentSpec and an ExperimentContext (the prepared
dataset plus caches shared by a batch) and returns an ExperimentResult. Models
of one experiment train in parallel across kinds when workers > 1; the
overhead benchmark always runs serially.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from config import DEFAULT_SEED, DatasetSource, ExperimentName, ExperimentSpec, RunConfig, Task
from exceptions import FlowLensError, InputError, TrainingGuardError
from models import Metrics, ModelKind, StopReason, TrainedModel, TrainingMeta, accuracy, predict, train
from services.data import DataTable, PreparedData, class_distribution, prepare
from services.explain import MaskingReport, SensitivityReport, mask_topk, sensitivity
from services.selection import CorrelationReport, FeatureSelection, apply_selection, correlation_matrix, select_features
from utils import TOOLKIT_NAME, TOOLKIT_VERSION, environment_fingerprint

logger = logging.getLogger(__name__)


class ModelOutcome(BaseModel):
    model: ModelKind
    metrics: Metrics
    training: TrainingMeta
    feature_count: int
    sensitivity: Optional[SensitivityReport] = None
    masking: Optional[MaskingReport] = None
    pre_removal_accuracy: Optional[float] = None


class OverheadEntry(BaseModel):
    model: ModelKind
    train_wall_time: float
    predict_wall_time: float
    epochs_run: int
    train_repeats: List[float]
    predict_repeats: List[float]


class OverheadReport(BaseModel):
    """Median wall-clock seconds; predict times are per 1,000 test rows."""
    repeats: int
    test_rows: int
    serial: bool = True
    entries: List[OverheadEntry]


class L2ProbeRow(BaseModel):
    l2: float
    metrics: Metrics
    training: TrainingMeta
    sensitivity: SensitivityReport


class ExperimentResult(BaseModel):
    toolkit: str = TOOLKIT_NAME
    version: str = TOOLKIT_VERSION
    spec: ExperimentSpec
    dataset: Dict[str, Any]
    outcomes: List[ModelOutcome] = []
    selection: Optional[FeatureSelection] = None
    removed_groups: Optional[List[str]] = None
    removal_rule: Optional[str] = None
    robustness_ranking: Optional[List[ModelKind]] = None
    overhead: Optional[OverheadReport] = None
    l2_probe: Optional[List[L2ProbeRow]] = None
    environment: Dict[str, Any]
    seeds: Dict[str, int]

    @property
    def label(self) -> str:
        return self.spec.label


@dataclass(frozen=True)
class ExperimentContext:
    """Prepared data and per-batch caches; models trained on identical inputs are reused."""
    prepared: PreparedData
    progress: bool = False
    models: Dict[Tuple, TrainedModel] = field(default_factory=dict)
    sweeps: Dict[Tuple, SensitivityReport] = field(default_factory=dict)
    correlations: Dict[str, CorrelationReport] = field(default_factory=dict)

    @classmethod
    def create(cls, spec: ExperimentSpec, prepared: Optional[PreparedData] = None,
               progress: bool = False) -> "ExperimentContext":
        if prepared is None:
            prepared = prepare(spec.source, spec.seed)
        return cls(prepared=prepared, progress=progress)

    def correlation(self) -> CorrelationReport:
        if "train" not in self.correlations:
            self.correlations["train"] = correlation_matrix(self.prepared.table, rows=self.prepared.split.train_idx)
        return self.correlations["train"]


@dataclass(frozen=True)
class Split:
    """Train and test views of one feature layout."""
    train: DataTable
    test: DataTable

    @property
    def train_means(self) -> np.ndarray:
        return self.train.matrix.mean(axis=0)

    def without(self, groups: Sequence[str]) -> "Split":
        return Split(self.train.without_groups(groups), self.test.without_groups(groups))


def _full_split(context: ExperimentContext) -> Split:
    return Split(context.prepared.train_table(), context.prepared.test_table())


def _dataset_summary(context: ExperimentContext, task: Task) -> Dict[str, Any]:
    summary = context.prepared.summary()
    summary["class_distribution"] = [
        {"name": share.name, "count": share.count, "fraction": share.fraction}
        for share in class_distribution(context.prepared.table, task)
    ]
    return summary


def _result(spec: ExperimentSpec, context: ExperimentContext, **fields) -> ExperimentResult:
    return ExperimentResult(
        spec=spec,
        dataset=_dataset_summary(context, spec.task),
        environment=environment_fingerprint(),
        seeds={"split": context.prepared.split.seed, "training": spec.seed,
               "permute": spec.occlusion.permute_seed},
        **fields,
    )


def _cache_key(spec: ExperimentSpec, kind: ModelKind, table: DataTable) -> Tuple:
    cfg = spec.train_config(kind).model_copy(update={"n_jobs": 1})
    return (spec.task, kind, table.feature_names, cfg.model_dump_json())


def train_models(
    spec: ExperimentSpec,
    context: ExperimentContext,
    table: DataTable,
    use_cache: bool = True,
) -> Dict[ModelKind, TrainedModel]:
    """Train every requested kind on `table`, in parallel across kinds when workers > 1."""
    labels = table.labels(spec.task)
    class_count = table.class_count(spec.task)

    def train_one(kind: ModelKind) -> TrainedModel:
        key = _cache_key(spec, kind, table)
        if use_cache and key in context.models:
            return context.models[key]
        model = train(kind, table.matrix, labels, spec.train_config(kind), class_count=class_count,
                      feature_names=table.feature_names)
        if model.meta.stop_reason is StopReason.PLATEAU and model.meta.train_accuracy < model.config.target_accuracy:
            logger.warning("%s (%s) plateaued at %.4f training accuracy", kind.value, spec.task.value,
                           model.meta.train_accuracy)
        if use_cache:
            context.models[key] = model
        return model

    trained: Dict[ModelKind, TrainedModel] = {}
    bar = tqdm(total=len(spec.models), desc=f"training {spec.label}", disable=not context.progress, leave=False)
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as executor:
            future_to_kind = {executor.submit(train_one, kind): kind for kind in spec.models}
            for future in as_completed(future_to_kind):
                trained[future_to_kind[future]] = future.result()
                bar.update(1)
    else:
        for kind in spec.models:
            trained[kind] = train_one(kind)
            bar.update(1)
    bar.close()
    return {kind: trained[kind] for kind in spec.models}


def evaluate(spec: ExperimentSpec, model: TrainedModel, test: DataTable, guard: bool = True) -> Metrics:
    pred = predict(model, test.matrix, test.feature_names)
    metrics = accuracy(pred, test.labels(spec.task), test.class_count(spec.task))
    if guard and metrics.accuracy < spec.accuracy_guard:
        raise TrainingGuardError(model.kind.value, spec.task.value, metrics.accuracy, spec.accuracy_guard)
    return metrics


def sweep(spec: ExperimentSpec, context: ExperimentContext, model: TrainedModel, split: Split,
          use_cache: bool = True) -> SensitivityReport:
    key = (spec.task, model.kind, split.test.feature_names, spec.occlusion.model_dump_json(),
           _cache_key(spec, model.kind, split.train))
    if use_cache and key in context.sweeps:
        return context.sweeps[key]
    report = sensitivity(
        model,
        split.test.matrix,
        split.test.labels(spec.task),
        split.test.groups,
        split.train_means,
        spec.occlusion,
        workers=spec.workers,
        task=spec.task,
        progress=context.progress,
        feature_names=split.test.feature_names,
    )
    if use_cache:
        context.sweeps[key] = report
    return report


def _context(spec: ExperimentSpec, context: Optional[ExperimentContext]) -> ExperimentContext:
    return context if context is not None else ExperimentContext.create(spec)


def run_sensitivity(spec: ExperimentSpec, context: Optional[ExperimentContext] = None) -> ExperimentResult:
    """Occlusion sweep of every model on all features or on the correlation-selected ones."""
    context = _context(spec, context)
    split = _full_split(context)
    selection = None
    if spec.name is ExperimentName.SELECTED_SENSITIVITY:
        selection = select_features(context.correlation(), spec.selection_threshold, spec.task)
        split = Split(apply_selection(split.train, selection), apply_selection(split.test, selection))

    outcomes = []
    for kind, model in train_models(spec, context, split.train).items():
        metrics = evaluate(spec, model, split.test)
        outcomes.append(ModelOutcome(
            model=kind,
            metrics=metrics,
            training=model.meta,
            feature_count=model.n_features,
            sensitivity=sweep(spec, context, model, split),
        ))
    return _result(spec, context, outcomes=outcomes, selection=selection)


def run_top2_masking(spec: ExperimentSpec, context: Optional[ExperimentContext] = None) -> ExperimentResult:
    """Mask each model's own top-k groups together; rank models by how little that hurts."""
    context = _context(spec, context)
    split = _full_split(context)
    if len(split.test.groups) < max(2, spec.masking_k):
        raise InputError(f"top-{spec.masking_k} masking needs at least {max(2, spec.masking_k)} feature groups")

    outcomes = []
    for kind, model in train_models(spec, context, split.train).items():
        metrics = evaluate(spec, model, split.test)
        report = sweep(spec, context, model, split)
        masking = mask_topk(model, split.test.matrix, split.test.labels(spec.task), report,
                            split.test.groups, split.train_means, k=spec.masking_k, cfg=spec.occlusion)
        outcomes.append(ModelOutcome(
            model=kind,
            metrics=metrics,
            training=model.meta,
            feature_count=model.n_features,
            sensitivity=report,
            masking=masking,
        ))
    position = {kind: i for i, kind in enumerate(spec.models)}
    ranking = [o.model for o in sorted(outcomes, key=lambda o: (o.masking.degradation, position[o.model]))]
    return _result(spec, context, outcomes=outcomes, robustness_ranking=ranking)


def resolve_removal(spec: ExperimentSpec, context: ExperimentContext, split: Split,
                    models: Dict[ModelKind, TrainedModel]) -> Tuple[List[str], str]:
    """
    Groups to drop before retraining, and a description of the rule used.

    An explicit list wins; otherwise the name rule drops every group whose
    name contains the removal pattern, and the rank rule drops the groups with
    the highest mean degradation over a full-feature sweep of all models.
    """
    groups = split.train.group_names
    if spec.removal is not None:
        return split.train.check_groups(spec.removal), "explicit"
    if spec.removal_mode == "name":
        pattern = spec.removal_pattern.lower()
        matched = [g for g in groups if pattern in g.lower()]
        if not matched:
            raise InputError(f"no feature group name contains '{spec.removal_pattern}'; pass an explicit removal list")
        return matched, f"name:{spec.removal_pattern}"
    reports = [sweep(spec, context, model, split) for model in models.values()]
    mean = {g: float(np.mean([r.degradation_of(g) for r in reports])) for g in groups}
    ranked = sorted(range(len(groups)), key=lambda i: (-mean[groups[i]], i))
    return [groups[i] for i in ranked[:spec.removal_count]], f"rank:{spec.removal_count}"


def run_retrain_without(spec: ExperimentSpec, context: Optional[ExperimentContext] = None) -> ExperimentResult:
    """Retrain every model without the removal groups and sweep again."""
    context = _context(spec, context)
    full = _full_split(context)
    originals = train_models(spec, context, full.train)
    before = {kind: evaluate(spec, model, full.test).accuracy for kind, model in originals.items()}

    removed, rule = resolve_removal(spec, context, full, originals)
    reduced = full.without(removed)
    logger.info("%s: removed %s (%s), %d features left", spec.label, ", ".join(removed), rule,
                reduced.train.n_features)

    outcomes = []
    for kind, model in train_models(spec, context, reduced.train).items():
        # Accuracy loss after removal is the measurement here, so no guard.
        metrics = evaluate(spec, model, reduced.test, guard=False)
        outcomes.append(ModelOutcome(
            model=kind,
            metrics=metrics,
            training=model.meta,
            feature_count=model.n_features,
            sensitivity=sweep(spec, context, model, reduced),
            pre_removal_accuracy=before[kind],
        ))
    return _result(spec, context, outcomes=outcomes, removed_groups=removed, removal_rule=rule)


def run_overhead(spec: ExperimentSpec, context: Optional[ExperimentContext] = None) -> ExperimentResult:
    """
    Serial wall-clock benchmark.

    Training time is the fit itself as measured by train(); prediction is
    timed with perf_counter around predict() on the whole test split and
    reported per 1,000 rows. Medians over `repeats` runs, raw values kept.
    """
    context = _context(spec, context)
    split = _full_split(context)
    labels = split.train.labels(spec.task)
    class_count = split.train.class_count(spec.task)
    n_test = split.test.n_rows

    entries, outcomes = [], []
    for kind in tqdm(spec.models, desc=f"overhead {spec.task.value}", disable=not context.progress, leave=False):
        train_times, predict_times = [], []
        model = None
        for _ in range(spec.repeats):
            model = train(kind, split.train.matrix, labels, spec.train_config(kind, serial=True),
                          class_count=class_count, feature_names=split.train.feature_names)
            train_times.append(model.meta.train_wall_time)
            started = time.perf_counter()
            model.predict(split.test.matrix)
            predict_times.append((time.perf_counter() - started) * 1000.0 / n_test)
        metrics = evaluate(spec, model, split.test)
        entries.append(OverheadEntry(
            model=kind,
            train_wall_time=float(np.median(train_times)),
            predict_wall_time=float(np.median(predict_times)),
            epochs_run=model.meta.epochs_run,
            train_repeats=train_times,
            predict_repeats=predict_times,
        ))
        outcomes.append(ModelOutcome(model=kind, metrics=metrics, training=model.meta,
                                     feature_count=model.n_features))
    report = OverheadReport(repeats=spec.repeats, test_rows=n_test, entries=entries)
    return _result(spec, context, outcomes=outcomes, overhead=report)


def run_l2_probe(spec: ExperimentSpec, context: Optional[ExperimentContext] = None) -> ExperimentResult:
    """MLP with its configured L2 penalty and with none, side by side."""
    context = _context(spec, context)
    split = _full_split(context)
    labels = split.train.labels(spec.task)
    class_count = split.train.class_count(spec.task)
    configured = spec.train_config(ModelKind.MLP).l2_mlp

    rows = []
    for l2 in (configured, 0.0):
        model = train(ModelKind.MLP, split.train.matrix, labels, spec.train_config(ModelKind.MLP, l2_mlp=l2),
                      class_count=class_count, feature_names=split.train.feature_names)
        rows.append(L2ProbeRow(
            l2=l2,
            metrics=evaluate(spec, model, split.test),
            training=model.meta,
            sensitivity=sweep(spec, context, model, split, use_cache=False),
        ))
    return _result(spec, context, l2_probe=rows)


RUNNERS = {
    ExperimentName.FULL_SENSITIVITY: run_sensitivity,
    ExperimentName.SELECTED_SENSITIVITY: run_sensitivity,
    ExperimentName.TOP2_MASKING: run_top2_masking,
    ExperimentName.RETRAIN_WITHOUT_TOP: run_retrain_without,
    ExperimentName.OVERHEAD: run_overhead,
    ExperimentName.MLP_L2_PROBE: run_l2_probe,
}


def run_experiment(
    spec: ExperimentSpec,
    prepared: Optional[PreparedData] = None,
    context: Optional[ExperimentContext] = None,
    progress: bool = False,
) -> ExperimentResult:
    if context is None:
        context = ExperimentContext.create(spec, prepared, progress=progress)
    logger.info("running %s", spec.label)
    started = time.perf_counter()
    result = RUNNERS[spec.name](spec, context)
    logger.info("%s finished in %.1fs", spec.label, time.perf_counter() - started)
    return result


def run_batch(config: RunConfig, output_dir=None, progress: bool = False,
              prepared: Optional[PreparedData] = None) -> List[ExperimentResult]:
    """
    Run every (experiment, task) of a RunConfig on one prepared dataset.

    The first failure propagates with the experiment label attached as a note.
    """
    if prepared is None:
        prepared = prepare(config.source, config.seed)
    context = ExperimentContext(prepared=prepared, progress=progress)
    results = []
    for spec in config.specs():
        try:
            results.append(run_experiment(spec, context=context))
        except FlowLensError as exc:
            exc.add_note(f"while running {spec.label}")
            raise
    if output_dir is not None:
        from services.report import write_bundle
        write_bundle(results, output_dir)
    return results


def run_all(source: DatasetSource, seed: int = DEFAULT_SEED, output_dir=None, progress: bool = False,
            **options) -> List[ExperimentResult]:
    """The five study experiments on both tasks (ten results), optionally written as a bundle."""
    return run_batch(RunConfig(source=source, seed=seed, **options), output_dir=output_dir, progress=progress)
