"""Tests for the experiment runners and batches."""

import pytest
from pydantic import ValidationError

from config import DatasetSource, ExperimentName, ExperimentSpec, RunConfig, SyntheticParams, Task
from exceptions import LayoutMismatchError, TrainingGuardError
from models import ModelKind
from services.data import prepare
from services.experiments import ExperimentContext, run_all, run_batch, run_experiment
from services.report import verify_bundle

from conftest import FAST_OVERRIDES

INFORMATIVE = {"sttl", "signal_1", "signal_2"}
QUICK_MODELS = [ModelKind.LOGISTIC_REGRESSION, ModelKind.KNN, ModelKind.DECISION_TREE]


@pytest.fixture
def context(prepared):
    return ExperimentContext(prepared=prepared)


def _spec(source, name, **fields):
    fields.setdefault("models", QUICK_MODELS)
    return ExperimentSpec(name=name, source=source, train_overrides=FAST_OVERRIDES, **fields)


def test_full_sensitivity(small_source, context):
    result = run_experiment(_spec(small_source, ExperimentName.FULL_SENSITIVITY), context=context)
    assert [o.model for o in result.outcomes] == QUICK_MODELS
    for outcome in result.outcomes:
        assert outcome.metrics.accuracy >= 0.8
        assert outcome.sensitivity.ranking[0] in INFORMATIVE
        assert outcome.feature_count == context.prepared.table.n_features
    assert result.label == "full_sensitivity-binary"
    assert result.seeds == {"split": 42, "training": 42, "permute": 0}


def test_selected_sensitivity_uses_kept_groups(small_source, context):
    result = run_experiment(_spec(small_source, ExperimentName.SELECTED_SENSITIVITY), context=context)
    kept = set(result.selection.kept)
    assert INFORMATIVE <= kept
    for outcome in result.outcomes:
        assert {g.group for g in outcome.sensitivity.groups} == kept


def test_top2_masking_ranks_every_model(small_source, context):
    result = run_experiment(_spec(small_source, ExperimentName.TOP2_MASKING), context=context)
    assert sorted(result.robustness_ranking) == sorted(QUICK_MODELS)
    degradations = [next(o.masking.degradation for o in result.outcomes if o.model is kind)
                    for kind in result.robustness_ranking]
    assert degradations == sorted(degradations)
    for outcome in result.outcomes:
        assert outcome.masking.masked == outcome.sensitivity.ranking[:2]


def test_retrain_without_ttl(small_source, context):
    result = run_experiment(_spec(small_source, ExperimentName.RETRAIN_WITHOUT_TOP), context=context)
    assert result.removed_groups == ["sttl"]
    assert result.removal_rule == "name:ttl"
    for outcome in result.outcomes:
        assert outcome.pre_removal_accuracy is not None
        assert outcome.feature_count == context.prepared.table.n_features - 1
        assert "sttl" not in outcome.sensitivity.ranking


def test_retrain_by_rank(small_source, context):
    spec = _spec(small_source, ExperimentName.RETRAIN_WITHOUT_TOP, removal_mode="rank")
    result = run_experiment(spec, context=context)
    assert result.removal_rule == "rank:3"
    assert set(result.removed_groups) == INFORMATIVE


def test_retrain_with_unknown_group(small_source, context):
    spec = _spec(small_source, ExperimentName.RETRAIN_WITHOUT_TOP, removal=["dttl"])
    with pytest.raises(LayoutMismatchError):
        run_experiment(spec, context=context)


def test_overhead_is_serial_and_positive(small_source, context):
    spec = ExperimentSpec(name=ExperimentName.OVERHEAD, source=small_source, workers=4,
                          models=[ModelKind.DECISION_TREE, ModelKind.RANDOM_FOREST],
                          train_overrides={"n_trees": 20})
    result = run_experiment(spec, context=context)
    entries = {e.model: e for e in result.overhead.entries}
    assert result.overhead.serial
    assert result.overhead.repeats == 3
    for entry in entries.values():
        assert entry.train_wall_time > 0.0 and entry.predict_wall_time > 0.0
        assert len(entry.train_repeats) == 3
    assert entries[ModelKind.RANDOM_FOREST].train_wall_time > entries[ModelKind.DECISION_TREE].train_wall_time


def test_l2_probe(small_source, context):
    result = run_experiment(_spec(small_source, ExperimentName.MLP_L2_PROBE), context=context)
    assert [row.l2 for row in result.l2_probe] == [1e-4, 0.0]
    assert all(row.sensitivity.model is ModelKind.MLP for row in result.l2_probe)


def test_multiclass_task(small_source, context):
    spec = _spec(small_source, ExperimentName.FULL_SENSITIVITY, task=Task.MULTICLASS,
                 models=[ModelKind.DECISION_TREE], accuracy_guard=0.0)
    result = run_experiment(spec, context=context)
    confusion = result.outcomes[0].metrics.confusion
    assert len(confusion) == len(context.prepared.table.class_names)


def test_accuracy_guard():
    source = DatasetSource(synthetic=SyntheticParams(n_rows=4000, n_noise=2, label_noise=0.02))
    spec = ExperimentSpec(name=ExperimentName.FULL_SENSITIVITY, source=source,
                          models=[ModelKind.DECISION_TREE], accuracy_guard=1.0)
    with pytest.raises(TrainingGuardError) as info:
        run_experiment(spec, prepared=prepare(source, 42))
    assert info.value.floor == 1.0


def test_models_are_reused_within_a_batch(small_source, context):
    run_experiment(_spec(small_source, ExperimentName.FULL_SENSITIVITY), context=context)
    cached = dict(context.models)
    run_experiment(_spec(small_source, ExperimentName.TOP2_MASKING), context=context)
    assert context.models == cached


def test_run_batch_order_and_bundle(small_source, prepared, tmp_path):
    config = RunConfig(
        source=small_source,
        experiments=[ExperimentName.TOP2_MASKING, ExperimentName.FULL_SENSITIVITY],
        tasks=[Task.BINARY],
        models=QUICK_MODELS,
        train_overrides=FAST_OVERRIDES,
    )
    results = run_batch(config, output_dir=tmp_path / "bundle", prepared=prepared)
    assert [r.label for r in results] == ["full_sensitivity-binary", "top2_masking-binary"]
    assert (tmp_path / "bundle" / "manifest.json").exists()


def test_run_batch_notes_the_failing_experiment(small_source, prepared):
    config = RunConfig(source=small_source, experiments=[ExperimentName.RETRAIN_WITHOUT_TOP],
                       tasks=[Task.BINARY], models=[ModelKind.DECISION_TREE], removal=["nope"])
    with pytest.raises(LayoutMismatchError) as info:
        run_batch(config, prepared=prepared)
    assert "while running retrain_without_top-binary" in info.value.__notes__


def test_removing_a_noise_group_barely_moves_accuracy():
    source = DatasetSource(synthetic=SyntheticParams(n_rows=6000, n_noise=4))
    spec = ExperimentSpec(name=ExperimentName.RETRAIN_WITHOUT_TOP, source=source, removal=["noise_1"],
                          models=[ModelKind.LOGISTIC_REGRESSION],
                          train_overrides={"target_accuracy": 1.0, "min_improvement": 0.0})
    result = run_experiment(spec, prepared=prepare(source, 42))
    assert result.removed_groups == ["noise_1"]
    assert result.removal_rule == "explicit"
    outcome = result.outcomes[0]
    assert abs(outcome.metrics.accuracy - outcome.pre_removal_accuracy) < 0.01


def test_run_all_gives_ten_results_and_a_stable_bundle(small_source, tmp_path):
    options = dict(models=QUICK_MODELS, train_overrides=FAST_OVERRIDES, accuracy_guard=0.0,
                   selection_threshold=0.05)
    results = run_all(small_source, output_dir=tmp_path / "one", **options)
    assert len(results) == 10
    assert [r.label for r in results] == [
        f"{name}-{task}"
        for name in ("full_sensitivity", "selected_sensitivity", "top2_masking", "retrain_without_top", "overhead")
        for task in ("binary", "multiclass")
    ]

    run_all(small_source, output_dir=tmp_path / "two", **options)
    first, second = verify_bundle(tmp_path / "one"), verify_bundle(tmp_path / "two")
    stable = [f for f in first.manifest.files if not f.timing]
    assert "timings.json" not in {f.path for f in stable}
    assert stable == [f for f in second.manifest.files if not f.timing]
    for entry in stable:
        assert (tmp_path / "one" / entry.path).read_bytes() == (tmp_path / "two" / entry.path).read_bytes()


def test_removal_list_is_only_for_retraining(small_source):
    with pytest.raises(ValidationError, match="only applies to retrain_without_top"):
        ExperimentSpec(name=ExperimentName.TOP2_MASKING, source=small_source, removal=["sttl"])
    config = RunConfig(source=small_source, removal=["sttl"],
                       experiments=[ExperimentName.TOP2_MASKING, ExperimentName.RETRAIN_WITHOUT_TOP])
    removals = {spec.label: spec.removal for spec in config.specs()}
    assert removals["top2_masking-binary"] is None
    assert removals["retrain_without_top-multiclass"] == ["sttl"]
