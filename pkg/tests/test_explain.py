"""Tests for occlusion, sensitivity sweeps and top-k masking."""

import numpy as np
import pytest

from config import OcclusionBaseline, OcclusionConfig, Task
from exceptions import InputError, LayoutMismatchError
from models import ModelKind, train
from services.explain import degradation_table, mask_topk, occlude, sensitivity

LAYOUT = {"a": (0,), "b": (1,), "proto": (2, 3)}


@pytest.fixture(scope="module")
def threshold_data():
    """Only column 0 decides the label; columns 2-3 are a one-hot pair."""
    rng = np.random.default_rng(0)
    X = rng.random((400, 4))
    X[:, 2] = (rng.random(400) < 0.5).astype(float)
    X[:, 3] = 1.0 - X[:, 2]
    y = (X[:, 0] > 0.5).astype(np.int64)
    model = train(ModelKind.DECISION_TREE, X[:300], y[:300])
    return model, X[300:], y[300:], X[:300].mean(axis=0)


def test_occlude_train_mean():
    X = np.arange(12.0).reshape(3, 4)
    means = np.array([10.0, 20.0, 30.0, 40.0])
    out = occlude(X, LAYOUT, ["proto"], OcclusionConfig(), means)
    assert np.all(out[:, 2] == 30.0) and np.all(out[:, 3] == 40.0)
    assert np.array_equal(out[:, :2], X[:, :2])


def test_occlude_zero_and_no_mutation():
    X = np.ones((3, 4))
    out = occlude(X, LAYOUT, ["a"], OcclusionConfig(baseline=OcclusionBaseline.ZERO), np.zeros(4))
    assert np.all(out[:, 0] == 0.0)
    assert np.all(X == 1.0)


def test_occlude_permute_moves_group_rows_together():
    X = np.column_stack([np.arange(50.0), np.arange(50.0), np.arange(50.0), np.arange(50.0) + 100])
    cfg = OcclusionConfig(baseline=OcclusionBaseline.PERMUTE, permute_seed=3)
    out = occlude(X, LAYOUT, ["proto"], cfg, None)
    assert np.array_equal(out[:, 3] - out[:, 2], np.full(50, 100.0))
    assert sorted(out[:, 2]) == list(X[:, 2])
    assert np.array_equal(out, occlude(X, LAYOUT, ["proto"], cfg, None))


def test_occlude_duplicate_groups_are_idempotent():
    X = np.random.default_rng(1).random((5, 4))
    means = X.mean(axis=0)
    once = occlude(X, LAYOUT, ["a"], None, means)
    twice = occlude(X, LAYOUT, ["a", "a"], None, means)
    assert np.array_equal(once, twice)


def test_occlude_unknown_group():
    with pytest.raises(LayoutMismatchError):
        occlude(np.zeros((2, 4)), LAYOUT, ["ttl"], None, np.zeros(4))


def test_sensitivity_finds_the_deciding_column(threshold_data):
    model, X, y, means = threshold_data
    report = sensitivity(model, X, y, LAYOUT, means, task=Task.BINARY)
    assert report.ranking[0] == "a"
    assert report.degradation_of("a") > 0.3
    assert report.degradation_of("b") == 0.0
    assert report.degradation_of("proto") == 0.0
    assert [g.group for g in report.groups] == ["a", "b", "proto"]


def test_sensitivity_degradation_is_accuracy_difference(threshold_data):
    model, X, y, means = threshold_data
    report = sensitivity(model, X, y, LAYOUT, means)
    for entry in report.groups:
        assert entry.degradation == report.baseline_accuracy - entry.occluded_accuracy


def test_sensitivity_threads_match_serial(threshold_data):
    model, X, y, means = threshold_data
    serial = sensitivity(model, X, y, LAYOUT, means, workers=1)
    threaded = sensitivity(model, X, y, LAYOUT, means, workers=3)
    assert serial == threaded


def test_sensitivity_does_not_touch_inputs(threshold_data):
    model, X, y, means = threshold_data
    before = X.copy()
    sensitivity(model, X, y, LAYOUT, means)
    assert np.array_equal(X, before)


def test_sensitivity_group_subset(threshold_data):
    model, X, y, means = threshold_data
    report = sensitivity(model, X, y, LAYOUT, means, cfg=OcclusionConfig(groups=["b"]))
    assert report.ranking == ["b"]


def test_sensitivity_rejects_wrong_layout(threshold_data):
    model, X, y, means = threshold_data
    with pytest.raises(LayoutMismatchError):
        sensitivity(model, X[:, :3], y, {"a": (0,)}, means[:3])


def test_mask_topk(threshold_data):
    model, X, y, means = threshold_data
    base = sensitivity(model, X, y, LAYOUT, means)
    masked = mask_topk(model, X, y, base, LAYOUT, means, k=2)
    assert masked.masked == base.ranking[:2]
    assert masked.degradation == masked.accuracy_before - masked.accuracy_after
    assert masked.degradation == pytest.approx(base.degradation_of("a"))

    nothing = mask_topk(model, X, y, base, LAYOUT, means, k=0)
    assert nothing.masked == [] and nothing.degradation == 0.0
    with pytest.raises(InputError):
        mask_topk(model, X, y, base, LAYOUT, means, k=4)


def test_degradation_table(threshold_data):
    model, X, y, means = threshold_data
    table = degradation_table([sensitivity(model, X, y, LAYOUT, means)])
    assert list(table.columns) == [
        "model", "task", "group", "baseline_accuracy", "occluded_accuracy", "degradation", "rank",
    ]
    assert len(table) == 3
    assert table.loc[table["group"] == "a", "rank"].item() == 1


def test_sensitivity_rejects_renamed_columns():
    rng = np.random.default_rng(4)
    X = rng.random((200, 4))
    y = (X[:, 0] > 0.5).astype(np.int64)
    model = train(ModelKind.DECISION_TREE, X, y, feature_names=["a", "b", "proto=tcp", "proto=udp"])
    layout = {"a": (0,), "b": (1,), "proto": (2, 3)}
    report = sensitivity(model, X, y, layout, X.mean(axis=0), feature_names=["a", "b", "proto=tcp", "proto=udp"])
    assert report.ranking[0] == "a"
    with pytest.raises(LayoutMismatchError, match="proto=udp"):
        sensitivity(model, X, y, layout, X.mean(axis=0), feature_names=["a", "b", "proto=tcp", "proto=icmp"])


@pytest.mark.parametrize("kind", [ModelKind.DECISION_TREE, ModelKind.KNN, ModelKind.LOGISTIC_REGRESSION])
def test_column_constant_in_training_has_zero_sensitivity(kind):
    rng = np.random.default_rng(6)
    X = rng.random((300, 3))
    X[:, 1] = 0.0
    y = (X[:, 0] + X[:, 2] > 1.0).astype(np.int64)
    model = train(kind, X[:200], y[:200])
    means = X[:200].mean(axis=0)
    assert means[1] == 0.0
    report = sensitivity(model, X[200:], y[200:], {"x0": (0,), "x1": (1,), "x2": (2,)}, means)
    assert report.degradation_of("x1") == 0.0
