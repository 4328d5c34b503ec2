"""Tests for Pearson correlation and group selection."""

import numpy as np
import pytest

from config import Task
from exceptions import InputError, SelectionError
from services.selection import (
    CorrelationReport,
    apply_selection,
    correlation_matrix,
    pearson,
    select_features,
)


def _report(scores):
    names = tuple(scores)
    return CorrelationReport(
        feature_names=names,
        matrix=np.eye(len(names)),
        groups={name: (i,) for i, name in enumerate(names)},
        feature_binary=np.array(list(scores.values())),
        feature_multiclass=np.array(list(scores.values())),
        binary_scores=dict(scores),
        multiclass_scores=dict(scores),
    )


def test_pearson_perfect_and_inverse():
    x = np.arange(10.0)
    assert pearson(x, 3 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=200), rng.normal(size=200)
    r = pearson(x, y)
    assert pearson(2.5 * x + 7.0, y) == pytest.approx(r, abs=1e-12)
    assert pearson(-0.5 * x + 1.0, y) == pytest.approx(-r, abs=1e-12)


def test_pearson_constant_sample_is_zero():
    assert pearson(np.ones(5), np.arange(5.0)) == 0.0


def test_pearson_validates_lengths():
    with pytest.raises(InputError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        pearson([1.0], [2.0])


def test_correlation_matrix_properties(prepared):
    report = correlation_matrix(prepared.table, rows=prepared.split.train_idx)
    m = report.matrix
    assert m.shape == (prepared.table.n_features, prepared.table.n_features)
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 1.0)
    assert np.all(np.abs(m) <= 1.0)


def test_matrix_entries_match_pearson(prepared):
    table = prepared.table
    report = correlation_matrix(table)
    i, j = table.feature_names.index("sttl"), table.feature_names.index("signal_1")
    assert report.matrix[i, j] == pytest.approx(pearson(table.matrix[:, i], table.matrix[:, j]), abs=1e-10)


def test_informative_groups_outscore_noise(prepared):
    report = correlation_matrix(prepared.table, rows=prepared.split.train_idx)
    scores = report.scores(Task.BINARY)
    informative = min(scores[g] for g in ("sttl", "signal_1", "signal_2"))
    noise = max(scores[g] for g in scores if g.startswith("noise_") or g == "cat_1")
    assert informative > noise


def test_threshold_boundary_is_inclusive():
    selection = select_features(_report({"a": 0.30, "b": 0.2999, "c": 0.9}), 0.30)
    assert selection.kept == ["a", "c"]
    assert selection.dropped == {"b": 0.2999}


def test_nothing_selected_raises():
    with pytest.raises(SelectionError, match="lower the threshold"):
        select_features(_report({"a": 0.1, "b": 0.2}), 0.3)


def test_threshold_range():
    with pytest.raises(InputError):
        select_features(_report({"a": 0.5}), 1.0)


def test_apply_selection_keeps_whole_groups(prepared):
    report = correlation_matrix(prepared.table, rows=prepared.split.train_idx)
    selection = select_features(report, 0.3, Task.BINARY)
    reduced = apply_selection(prepared.table, selection)
    assert list(reduced.groups) == selection.kept
    assert apply_selection(prepared.table, None) is prepared.table


def test_pearson_ignores_row_order():
    rng = np.random.default_rng(3)
    x = rng.normal(size=500)
    y = 0.4 * x + rng.normal(size=500)
    order = rng.permutation(500)
    assert pearson(x[order], y[order]) == pytest.approx(pearson(x, y), abs=1e-12)


def test_correlation_report_ignores_row_order(prepared):
    rows = np.asarray(prepared.split.train_idx)
    shuffled = np.random.default_rng(11).permutation(rows)
    a = correlation_matrix(prepared.table, rows=rows)
    b = correlation_matrix(prepared.table, rows=shuffled)
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)
    for task in (Task.BINARY, Task.MULTICLASS):
        left, right = a.scores(task), b.scores(task)
        assert left.keys() == right.keys()
        for group in left:
            assert right[group] == pytest.approx(left[group], abs=1e-12)


def test_higher_threshold_keeps_a_subset(prepared):
    report = correlation_matrix(prepared.table, rows=prepared.split.train_idx)
    kept = []
    for threshold in (1e-9, 0.05, 0.1, 0.3, 0.5):
        try:
            kept.append(set(select_features(report, threshold, Task.BINARY).kept))
        except SelectionError:
            kept.append(set())
    for looser, stricter in zip(kept, kept[1:]):
        assert stricter <= looser
    assert kept[0] == set(prepared.table.groups)
