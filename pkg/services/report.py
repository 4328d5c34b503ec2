"""
Result bundles: canonical JSON, CSV tables and SVG figures with a hashed manifest.

    <dir>/manifest.json
    <dir>/timings.json
    <dir>/<experiment>-<task>/result.json
    <dir>/<experiment>-<task>/tables/*.csv
    <dir>/<experiment>-<task>/figures/*.svg

Wall-clock fields are moved out of result.json into timings.json, so every
file whose manifest entry has timing = false is byte-identical across reruns
with the same inputs and seed.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from config import ExperimentName, Task
from exceptions import BundleError, FigureError, InputError, SelectionError
from services.data import PreparedData, class_distribution
from services.experiments import ExperimentResult
from services.explain import degradation_table
from services.figures import Series, build_figure, render_svg
from services.selection import correlation_matrix, select_features
from utils import TOOLKIT_NAME, TOOLKIT_VERSION, environment_fingerprint, split_timing_fields

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"


def canonical_json(doc: Any) -> str:
    """Sorted keys, two-space indent, shortest round-trip floats, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def sha256_of(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class BundleFile(BaseModel):
    path: str
    sha256: str
    bytes: int
    timing: bool = False


class ManifestExperiment(BaseModel):
    label: str
    name: ExperimentName
    task: Task
    seed: int
    directory: str
    spec: Dict[str, Any]


class Manifest(BaseModel):
    toolkit: str = TOOLKIT_NAME
    version: str = TOOLKIT_VERSION
    environment: Dict[str, Any]
    experiments: List[ManifestExperiment] = []
    files: List[BundleFile] = []


class Bundle(BaseModel):
    root: Path
    manifest: Manifest

    def result_documents(self) -> List[Dict[str, Any]]:
        """The result.json documents of every experiment, in manifest order."""
        docs = []
        for experiment in self.manifest.experiments:
            path = self.root / experiment.directory / "result.json"
            docs.append(json.loads(path.read_text(encoding="utf-8")))
        return docs


Output = Tuple[str, str, bool]


def _frame(rows: List[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=list(columns))


def _sensitivity_outputs(result: ExperimentResult) -> List[Output]:
    reports = [o.sensitivity for o in result.outcomes if o.sensitivity is not None]
    if not reports:
        return []
    groups = [entry.group for entry in reports[0].groups]
    figure = build_figure(
        kind="heatmap",
        title=f"Occlusion degradation ({result.label})",
        categories=groups,
        row_labels=[r.model.value for r in reports],
        matrix=[[r.degradation_of(g) for g in groups] for r in reports],
    )
    return [
        ("tables/sensitivity.csv", csv_text(degradation_table(reports)), False),
        ("figures/sensitivity.svg", render_svg(figure), False),
    ]


def _selection_outputs(result: ExperimentResult) -> List[Output]:
    selection = result.selection
    rows = [{"group": g, "score": s, "kept": g in selection.kept} for g, s in selection.scores.items()]
    figure = build_figure(
        kind="bar",
        title=f"|r| with the {selection.mode.value} label (threshold {selection.threshold:g})",
        y_label="|r|",
        categories=list(selection.scores),
        series=[Series(name="score", values=list(selection.scores.values()))],
    )
    return [
        ("tables/selection.csv", csv_text(_frame(rows, ["group", "score", "kept"])), False),
        ("figures/selection.svg", render_svg(figure), False),
    ]


def _masking_outputs(result: ExperimentResult) -> List[Output]:
    rank = {kind: i + 1 for i, kind in enumerate(result.robustness_ranking or [])}
    rows = [{
        "model": o.model.value,
        "masked": ";".join(o.masking.masked),
        "k": o.masking.k,
        "accuracy_before": o.masking.accuracy_before,
        "accuracy_after": o.masking.accuracy_after,
        "degradation": o.masking.degradation,
        "robustness_rank": rank.get(o.model),
    } for o in result.outcomes]
    figure = build_figure(
        kind="bar",
        title=f"Top-{result.spec.masking_k} masking degradation ({result.label})",
        y_label="accuracy drop",
        categories=[o.model.value for o in result.outcomes],
        series=[Series(name="degradation", values=[o.masking.degradation for o in result.outcomes])],
    )
    columns = ["model", "masked", "k", "accuracy_before", "accuracy_after", "degradation", "robustness_rank"]
    return [
        ("tables/masking.csv", csv_text(_frame(rows, columns)), False),
        ("figures/masking.svg", render_svg(figure), False),
    ]


def _retrain_outputs(result: ExperimentResult) -> List[Output]:
    removed = ";".join(result.removed_groups or [])
    rows = [{
        "model": o.model.value,
        "removed": removed,
        "pre_removal_accuracy": o.pre_removal_accuracy,
        "accuracy": o.metrics.accuracy,
        "drop": o.pre_removal_accuracy - o.metrics.accuracy,
    } for o in result.outcomes]
    figure = build_figure(
        kind="grouped_bar",
        title=f"Accuracy before and after removing {removed} ({result.label})",
        y_label="test accuracy",
        categories=[o.model.value for o in result.outcomes],
        series=[
            Series(name="all features", values=[o.pre_removal_accuracy for o in result.outcomes]),
            Series(name="retrained", values=[o.metrics.accuracy for o in result.outcomes]),
        ],
    )
    columns = ["model", "removed", "pre_removal_accuracy", "accuracy", "drop"]
    return [
        ("tables/retrain.csv", csv_text(_frame(rows, columns)), False),
        ("figures/retrain.svg", render_svg(figure), False),
    ] + _sensitivity_outputs(result)


def _overhead_outputs(result: ExperimentResult) -> List[Output]:
    entries = result.overhead.entries
    rows = [{
        "model": e.model.value,
        "train_wall_time": e.train_wall_time,
        "predict_wall_time_per_1000": e.predict_wall_time,
        "epochs_run": e.epochs_run,
        "train_repeats": ";".join(repr(t) for t in e.train_repeats),
        "predict_repeats": ";".join(repr(t) for t in e.predict_repeats),
    } for e in entries]
    figure = build_figure(
        kind="bar",
        title=f"Median training time ({result.label})",
        y_label="seconds",
        categories=[e.model.value for e in entries],
        series=[Series(name="train", values=[e.train_wall_time for e in entries])],
    )
    columns = ["model", "train_wall_time", "predict_wall_time_per_1000", "epochs_run",
               "train_repeats", "predict_repeats"]
    return [
        ("tables/overhead.csv", csv_text(_frame(rows, columns)), True),
        ("figures/overhead.svg", render_svg(figure), True),
    ]


def _l2_outputs(result: ExperimentResult) -> List[Output]:
    probe = result.l2_probe or []
    rows = []
    for row in probe:
        for entry in row.sensitivity.groups:
            rows.append({"l2": row.l2, "accuracy": row.metrics.accuracy, "group": entry.group,
                         "degradation": entry.degradation})
    groups = [entry.group for entry in probe[0].sensitivity.groups] if probe else []
    figure = build_figure(
        kind="grouped_bar",
        title=f"MLP occlusion degradation with and without L2 ({result.label})",
        y_label="accuracy drop",
        categories=groups,
        series=[Series(name=f"l2={row.l2:g}", values=[row.sensitivity.degradation_of(g) for g in groups])
                for row in probe],
    )
    return [
        ("tables/l2_probe.csv", csv_text(_frame(rows, ["l2", "accuracy", "group", "degradation"])), False),
        ("figures/l2_probe.svg", render_svg(figure), False),
    ]


def experiment_outputs(result: ExperimentResult) -> List[Output]:
    """(relative path, text, timing flag) for the tables and figures of one result."""
    name = result.spec.name
    if name is ExperimentName.FULL_SENSITIVITY:
        return _sensitivity_outputs(result)
    if name is ExperimentName.SELECTED_SENSITIVITY:
        return _sensitivity_outputs(result) + _selection_outputs(result)
    if name is ExperimentName.TOP2_MASKING:
        return _masking_outputs(result)
    if name is ExperimentName.RETRAIN_WITHOUT_TOP:
        return _retrain_outputs(result)
    if name is ExperimentName.OVERHEAD:
        return _overhead_outputs(result)
    return _l2_outputs(result)


class _Writer:
    def __init__(self, root: Path):
        self.root = root
        self.files: List[BundleFile] = []

    def emit(self, relative: str, text: str, timing: bool = False) -> None:
        data = text.encode("utf-8")
        path = self.root / relative
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as exc:
            raise BundleError(f"cannot write {path}: {exc}") from exc
        self.files.append(BundleFile(path=relative, sha256=sha256_of(data), bytes=len(data), timing=timing))


def _check_files(root: Path, files: Iterable[BundleFile]) -> None:
    for entry in files:
        path = root / entry.path
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise BundleError(f"{path} is listed in the manifest but cannot be read: {exc}") from exc
        if sha256_of(data) != entry.sha256:
            raise BundleError(f"hash mismatch for {path}")


def write_bundle(results: Sequence[ExperimentResult], directory) -> Bundle:
    """
    Write every result, the timings file and the manifest, then re-verify the hashes.

    Raises:
        BundleError: the directory is not writable or a hash does not match
    """
    root = Path(directory)
    labels = [r.label for r in results]
    if len(set(labels)) != len(labels):
        raise InputError(f"duplicate experiments in one bundle: {', '.join(labels)}")
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BundleError(f"cannot create bundle directory {root}: {exc}") from exc

    writer = _Writer(root)
    timings: Dict[str, Dict[str, Any]] = {}
    experiments = []
    for result in results:
        clean, timing_fields = split_timing_fields(result.model_dump(mode="json"))
        if timing_fields:
            timings[result.label] = timing_fields
        writer.emit(f"{result.label}/result.json", canonical_json(clean))
        for relative, text, timing in experiment_outputs(result):
            writer.emit(f"{result.label}/{relative}", text, timing)
        experiments.append(ManifestExperiment(
            label=result.label,
            name=result.spec.name,
            task=result.spec.task,
            seed=result.spec.seed,
            directory=result.label,
            spec=result.spec.model_dump(mode="json"),
        ))
    writer.emit(TIMINGS_NAME, canonical_json(timings), timing=True)

    manifest = Manifest(environment=environment_fingerprint(), experiments=experiments, files=writer.files)
    manifest_path = root / MANIFEST_NAME
    try:
        manifest_path.write_text(canonical_json(manifest.model_dump(mode="json")), encoding="utf-8")
    except OSError as exc:
        raise BundleError(f"cannot write {manifest_path}: {exc}") from exc
    _check_files(root, manifest.files)
    logger.info("wrote bundle %s: %d experiments, %d files", root, len(experiments), len(manifest.files))
    return Bundle(root=root, manifest=manifest)


def verify_bundle(directory) -> Bundle:
    """Read a bundle's manifest and recompute every listed hash."""
    root = Path(directory)
    path = root / MANIFEST_NAME
    try:
        manifest = Manifest.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise BundleError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise BundleError(f"{path} is not a valid manifest: {exc}") from exc
    _check_files(root, manifest.files)
    return Bundle(root=root, manifest=manifest)


def summary_rows(doc: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Flatten one result document into (experiment, model, task, accuracy, top group, degradation) rows."""
    spec = doc["spec"]
    label = f"{spec['name']}-{spec['task']}"
    rows = []
    for outcome in doc.get("outcomes") or []:
        top, degradation = "", None
        if outcome.get("masking"):
            top = "+".join(outcome["masking"]["masked"])
            degradation = outcome["masking"]["degradation"]
        elif outcome.get("sensitivity"):
            report = outcome["sensitivity"]
            top = report["ranking"][0]
            degradation = next(g["degradation"] for g in report["groups"] if g["group"] == top)
        rows.append({"experiment": label, "model": outcome["model"], "task": spec["task"],
                     "accuracy": outcome["metrics"]["accuracy"], "top": top, "degradation": degradation})
    for probe in doc.get("l2_probe") or []:
        report = probe["sensitivity"]
        top = report["ranking"][0]
        degradation = next(g["degradation"] for g in report["groups"] if g["group"] == top)
        rows.append({"experiment": label, "model": f"MLP(l2={probe['l2']:g})", "task": spec["task"],
                     "accuracy": probe["metrics"]["accuracy"], "top": top, "degradation": degradation})
    return rows


def format_summary(rows: List[Dict[str, Any]]) -> str:
    if not rows:
        return "(no results)"
    frame = pd.DataFrame(rows, columns=["experiment", "model", "task", "accuracy", "top", "degradation"])
    frame["accuracy"] = frame["accuracy"].map(lambda v: f"{v:.4f}")
    frame["degradation"] = frame["degradation"].map(lambda v: "" if v is None or pd.isna(v) else f"{v:+.4f}")
    return frame.to_string(index=False)


def write_preprocess_outputs(prepared: PreparedData, directory, threshold: float = 0.3) -> List[Path]:
    """
    Class distribution, training-row correlation matrix and both label
    selections, each as a CSV table and an SVG figure.
    """
    root = Path(directory)
    writer = _Writer(root)
    table = prepared.table

    shares = class_distribution(table)
    writer.emit("class_distribution.csv", csv_text(_frame(
        [{"class": s.name, "count": s.count, "fraction": s.fraction} for s in shares],
        ["class", "count", "fraction"])))
    writer.emit("class_distribution.svg", render_svg(build_figure(
        kind="distribution",
        title="Class distribution",
        categories=[s.name for s in shares],
        series=[Series(name="fraction", values=[s.fraction for s in shares])],
    )))

    report = correlation_matrix(table, rows=prepared.split.train_idx)
    matrix = pd.DataFrame(report.matrix, columns=list(report.feature_names))
    matrix.insert(0, "feature", list(report.feature_names))
    writer.emit("correlation.csv", csv_text(matrix))
    writer.emit("correlation.svg", render_svg(build_figure(
        kind="heatmap",
        title="Feature correlation (training rows)",
        categories=list(report.feature_names),
        row_labels=list(report.feature_names),
        matrix=report.matrix.tolist(),
    )))

    for task in (Task.BINARY, Task.MULTICLASS):
        scores = report.scores(task)
        try:
            kept = set(select_features(report, threshold, task).kept)
        except SelectionError as exc:
            logger.warning("%s", exc)
            kept = set()
        rows = [{"group": g, "score": s, "kept": g in kept} for g, s in scores.items()]
        writer.emit(f"selection_{task.value}.csv", csv_text(_frame(rows, ["group", "score", "kept"])))
        try:
            figure = build_figure(
                kind="bar",
                title=f"|r| with the {task.value} label (threshold {threshold:g})",
                y_label="|r|",
                categories=list(scores),
                series=[Series(name="score", values=list(scores.values()))],
            )
        except FigureError as exc:
            logger.warning("skipping selection figure: %s", exc)
            continue
        writer.emit(f"selection_{task.value}.svg", render_svg(figure))
    return [root / f.path for f in writer.files]
