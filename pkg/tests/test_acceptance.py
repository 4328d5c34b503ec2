"""
End-to-end acceptance checks on full-size data.

These train every model on tens of thousands of rows and take minutes;
run them with `pytest -m slow`. The UNSW-NB15 check needs the training CSV
path in FLOWLENS_UNSW_CSV.
"""

import json
import os
from pathlib import Path

import pytest

from config import DatasetSource, ExperimentName, ExperimentSpec, RunConfig, SyntheticParams
from models import ALL_KINDS, ModelKind
from services.data import prepare
from services.experiments import ExperimentContext, run_batch, run_experiment

pytestmark = pytest.mark.slow


def _context(**params):
    source = DatasetSource(synthetic=SyntheticParams(**params))
    return source, ExperimentContext(prepared=prepare(source, 42))


@pytest.fixture(scope="module")
def planted():
    return _context(n_rows=20_000, n_informative=3, n_noise=12)


def test_planted_features_are_found(planted):
    source, context = planted
    result = run_experiment(ExperimentSpec(name=ExperimentName.FULL_SENSITIVITY, source=source), context=context)
    informative = {"sttl", "signal_1", "signal_2"}
    for outcome in result.outcomes:
        assert outcome.metrics.accuracy >= 0.90, outcome.model
        report = outcome.sensitivity
        assert report.ranking[0] in informative, outcome.model
        for entry in report.groups:
            if entry.group.startswith("noise_"):
                assert abs(entry.degradation) < 0.02, (outcome.model, entry.group)


def test_two_informative_features_dominate():
    source, context = _context(n_rows=20_000, n_informative=2, n_noise=12)
    result = run_experiment(ExperimentSpec(name=ExperimentName.FULL_SENSITIVITY, source=source), context=context)
    dominated = 0
    for outcome in result.outcomes:
        report = outcome.sensitivity
        top = sum(report.degradation_of(g) for g in report.ranking[:2])
        rest = sum(report.degradation_of(g) for g in report.ranking[2:])
        dominated += top >= 5 * rest
    assert dominated >= 6


def test_forest_outlasts_tree_on_redundant_features():
    source, context = _context(n_rows=20_000, n_informative=4, n_noise=12, redundancy=0.5)
    masking = run_experiment(ExperimentSpec(name=ExperimentName.TOP2_MASKING, source=source), context=context)
    by_model = {o.model: o for o in masking.outcomes}
    assert (by_model[ModelKind.RANDOM_FOREST].masking.degradation
            < by_model[ModelKind.DECISION_TREE].masking.degradation)
    single = {kind: max(g.degradation for g in o.sensitivity.groups) for kind, o in by_model.items()}
    assert max(single, key=single.get) is ModelKind.DECISION_TREE


def test_overhead_forest_slower_than_tree(planted):
    source, context = planted
    spec = ExperimentSpec(name=ExperimentName.OVERHEAD, source=source,
                          models=[ModelKind.DECISION_TREE, ModelKind.RANDOM_FOREST], workers=4)
    entries = {e.model: e for e in run_experiment(spec, context=context).overhead.entries}
    assert entries[ModelKind.RANDOM_FOREST].train_wall_time > entries[ModelKind.DECISION_TREE].train_wall_time
    assert all(e.train_wall_time > 0 and e.predict_wall_time > 0 for e in entries.values())


def test_full_run_is_reproducible(tmp_path):
    source = DatasetSource(synthetic=SyntheticParams(n_rows=3000, n_informative=3, n_noise=6))
    bundles = []
    for name in ("one", "two"):
        run_batch(RunConfig(source=source, seed=7, train_overrides={"n_trees": 20}), output_dir=tmp_path / name)
        bundles.append(tmp_path / name)
    manifest = (bundles[0] / "manifest.json").read_text(encoding="utf-8")
    files = [f for f in json.loads(manifest)["files"] if not f["timing"]]
    assert len(files) > 10
    for entry in files:
        assert (bundles[0] / entry["path"]).read_bytes() == (bundles[1] / entry["path"]).read_bytes()


@pytest.mark.dataset
@pytest.mark.skipif(not os.environ.get("FLOWLENS_UNSW_CSV"), reason="FLOWLENS_UNSW_CSV is not set")
def test_unsw_binary_accuracy():
    source = DatasetSource(path=Path(os.environ["FLOWLENS_UNSW_CSV"]), max_rows=20_000)
    spec = ExperimentSpec(name=ExperimentName.FULL_SENSITIVITY, source=source, models=list(ALL_KINDS))
    result = run_experiment(spec)
    for outcome in result.outcomes:
        assert outcome.metrics.accuracy >= 0.88, outcome.model
