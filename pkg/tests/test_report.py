"""Tests for result bundles, canonical files and SVG figures."""

import json
import xml.etree.ElementTree as ET

import pytest

from config import ExperimentName, ExperimentSpec, Task
from exceptions import BundleError, FigureError, InputError
from models import ModelKind
from services.data import load_csv
from services.experiments import ExperimentContext, run_experiment
from services.figures import Series, build_figure, diverging_color, render_svg
from services.report import (
    canonical_json,
    format_summary,
    summary_rows,
    verify_bundle,
    write_bundle,
    write_preprocess_outputs,
)

from conftest import FAST_OVERRIDES

MODELS = [ModelKind.LOGISTIC_REGRESSION, ModelKind.DECISION_TREE]


def _results(small_source, prepared):
    context = ExperimentContext(prepared=prepared)
    specs = [
        ExperimentSpec(name=name, source=small_source, models=MODELS, train_overrides=FAST_OVERRIDES, repeats=1)
        for name in (ExperimentName.FULL_SENSITIVITY, ExperimentName.TOP2_MASKING, ExperimentName.OVERHEAD)
    ]
    return [run_experiment(spec, context=context) for spec in specs]


@pytest.fixture(scope="module")
def results(small_source, prepared):
    return _results(small_source, prepared)


def test_canonical_json_is_a_fixed_point():
    doc = {"b": [1.0, 0.1, 1e-300], "a": {"z": True, "y": None}, "c": "ünï"}
    text = canonical_json(doc)
    assert canonical_json(json.loads(text)) == text
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_bundle_layout(results, tmp_path):
    bundle = write_bundle(results, tmp_path)
    paths = {f.path for f in bundle.manifest.files}
    assert "full_sensitivity-binary/result.json" in paths
    assert "full_sensitivity-binary/tables/sensitivity.csv" in paths
    assert "full_sensitivity-binary/figures/sensitivity.svg" in paths
    assert "top2_masking-binary/tables/masking.csv" in paths
    assert "overhead-binary/tables/overhead.csv" in paths
    assert "timings.json" in paths
    assert (tmp_path / "manifest.json").exists()
    assert [e.label for e in bundle.manifest.experiments] == [r.label for r in results]


def test_timing_fields_live_in_timings_json(results, tmp_path):
    bundle = write_bundle(results, tmp_path)
    for path in ("full_sensitivity-binary/result.json", "overhead-binary/result.json"):
        text = (tmp_path / path).read_text(encoding="utf-8")
        assert "wall_time" not in text and "repeats\": [" not in text
    timings = json.loads((tmp_path / "timings.json").read_text(encoding="utf-8"))
    assert "overhead-binary" in timings
    assert any(key.endswith("train_wall_time") for key in timings["overhead-binary"])
    flags = {f.path: f.timing for f in bundle.manifest.files}
    assert flags["timings.json"] and flags["overhead-binary/tables/overhead.csv"]
    assert not flags["full_sensitivity-binary/result.json"]


def test_rerun_gives_identical_non_timing_files(small_source, prepared, tmp_path):
    first = write_bundle(_results(small_source, prepared), tmp_path / "one")
    second = write_bundle(_results(small_source, prepared), tmp_path / "two")
    stable = [f for f in first.manifest.files if not f.timing]
    assert stable
    for entry in stable:
        assert (tmp_path / "one" / entry.path).read_bytes() == (tmp_path / "two" / entry.path).read_bytes()
    assert [f for f in second.manifest.files if not f.timing] == stable


def test_verify_bundle_detects_changes(results, tmp_path):
    write_bundle(results, tmp_path)
    assert verify_bundle(tmp_path).manifest.toolkit == "flowlens"
    target = tmp_path / "top2_masking-binary" / "tables" / "masking.csv"
    target.write_text(target.read_text(encoding="utf-8") + "extra\n", encoding="utf-8")
    with pytest.raises(BundleError, match="hash mismatch"):
        verify_bundle(tmp_path)


def test_verify_bundle_without_manifest(tmp_path):
    with pytest.raises(BundleError):
        verify_bundle(tmp_path)


def test_duplicate_experiments_rejected(results, tmp_path):
    with pytest.raises(InputError):
        write_bundle([results[0], results[0]], tmp_path)


def test_bundle_files_parse(results, tmp_path):
    bundle = write_bundle(results, tmp_path)
    for entry in bundle.manifest.files:
        path = tmp_path / entry.path
        if path.suffix == ".svg":
            root = ET.parse(path).getroot()
            assert root.tag.endswith("svg")
        elif path.suffix == ".csv":
            assert load_csv(path).n_rows > 0
        else:
            json.loads(path.read_text(encoding="utf-8"))


def test_summary_rows(results):
    rows = summary_rows(results[1].model_dump(mode="json"))
    assert [row["model"] for row in rows] == [m.value for m in MODELS]
    assert all(row["top"].count("+") == 1 for row in rows)
    assert "LogisticRegression" in format_summary(rows)
    assert format_summary([]) == "(no results)"


def test_preprocess_outputs(prepared, tmp_path):
    written = write_preprocess_outputs(prepared, tmp_path)
    names = {path.name for path in written}
    assert {"class_distribution.csv", "class_distribution.svg", "correlation.csv", "correlation.svg",
            "selection_binary.csv", "selection_multiclass.csv"} <= names
    correlation = load_csv(tmp_path / "correlation.csv")
    assert correlation.n_rows == prepared.table.n_features
    ET.parse(tmp_path / "correlation.svg")


def test_bar_figure_is_zero_anchored():
    figure = build_figure(kind="bar", title="t", categories=["a", "b"],
                          series=[Series(name="s", values=[0.5, -0.25])])
    svg = render_svg(figure)
    ET.fromstring(svg.encode("utf-8"))
    assert "a = 0.5" in svg and "b = -0.25" in svg


def test_figure_validation():
    with pytest.raises(FigureError):
        build_figure(kind="bar", title="t", categories=["a"], series=[Series(name="s", values=[1.0, 2.0])])
    with pytest.raises(FigureError):
        build_figure(kind="heatmap", title="t", categories=["a"], row_labels=["r"], matrix=[[float("inf")]])


def test_figure_text_is_escaped():
    figure = build_figure(kind="distribution", title="<b>&", categories=["x<y"],
                          series=[Series(name="s", values=[1.0])])
    ET.fromstring(render_svg(figure).encode("utf-8"))


def test_diverging_color():
    assert diverging_color(0.0, 1.0) == "#ffffff"
    assert diverging_color(1.0, 1.0) == "#ff0000"
    assert diverging_color(-2.0, 1.0) == "#0000ff"
    assert diverging_color(0.5, 0.0) == "#ffffff"
