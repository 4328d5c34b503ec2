"""Tests for the flowlens command line."""

import json

import pytest
from click.testing import CliRunner

from app import cli
from exceptions import (
    BundleError,
    ConfigError,
    LayoutMismatchError,
    TrainingError,
    TrainingGuardError,
    exit_code_for,
)

SYNTHETIC = "n=800,informative=3,noise=2"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def preprocessed(runner, tmp_path):
    out = tmp_path / "prep"
    result = runner.invoke(cli, ["preprocess", "--synthetic", SYNTHETIC, "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.mark.parametrize("command", ["preprocess", "run", "train", "explain", "report"])
def test_help_for_every_command(runner, command):
    result = runner.invoke(cli, [command, "--help"])
    assert result.exit_code == 0
    assert "--help" in result.output


def test_run_help_shows_defaults(runner):
    result = runner.invoke(cli, ["run", "--help"])
    assert "default: 42" in result.output
    assert "flowlens-out" in result.output
    assert "FLOWLENS_OUTPUT_DIR" in result.output


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "1.0.0" in result.output


def test_preprocess_writes_tables(preprocessed):
    assert (preprocessed / "processed" / "table.csv").exists()
    assert (preprocessed / "processed" / "meta.json").exists()
    assert (preprocessed / "correlation.svg").exists()
    assert (preprocessed / "class_distribution.csv").exists()


def test_preprocess_missing_file(runner, tmp_path):
    missing = tmp_path / "nowhere.csv"
    result = runner.invoke(cli, ["preprocess", "--dataset", str(missing), "--output-dir", str(tmp_path)])
    assert result.exit_code == 2
    assert "nowhere.csv" in result.output


def test_preprocess_without_dataset(runner, tmp_path):
    result = runner.invoke(cli, ["preprocess", "--output-dir", str(tmp_path)])
    assert result.exit_code == 2
    assert "no dataset" in result.output


def test_bad_synthetic_parameter(runner, tmp_path):
    result = runner.invoke(cli, ["preprocess", "--synthetic", "n=100,colour=red", "--output-dir", str(tmp_path)])
    assert result.exit_code == 2


def test_train_and_explain(runner, preprocessed, tmp_path):
    model_file = tmp_path / "tree.json"
    result = runner.invoke(cli, ["train", "--processed", str(preprocessed / "processed"),
                                 "--model", "DecisionTree", "--output", str(model_file)])
    assert result.exit_code == 0, result.output
    assert "test accuracy" in result.output

    out = tmp_path / "explained"
    result = runner.invoke(cli, ["explain", "--processed", str(preprocessed / "processed"),
                                 "--model-file", str(model_file), "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "explain-DecisionTree-binary.json").read_text(encoding="utf-8"))
    assert report["ranking"][0] in {"sttl", "signal_1", "signal_2"}
    assert (out / "explain-DecisionTree-binary.csv").exists()


def test_repeated_setting_is_an_input_error(runner, preprocessed, tmp_path):
    result = runner.invoke(cli, ["preprocess", "--synthetic", "n=800,n=900", "--output-dir", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "set twice" in result.output

    result = runner.invoke(cli, ["train", "--processed", str(preprocessed / "processed"), "--model", "KNN",
                                 "--set", "k_neighbors=3", "--set", "k_neighbors=7"])
    assert result.exit_code == 2
    assert "more than once" in result.output


def test_train_rejects_unknown_setting(runner, preprocessed):
    result = runner.invoke(cli, ["train", "--processed", str(preprocessed / "processed"),
                                 "--model", "KNN", "--set", "neighbours=3"])
    assert result.exit_code == 2


def test_explain_layout_mismatch(runner, preprocessed, tmp_path):
    model_file = tmp_path / "tree.json"
    runner.invoke(cli, ["train", "--processed", str(preprocessed / "processed"),
                        "--model", "DecisionTree", "--output", str(model_file)])
    other = tmp_path / "other"
    runner.invoke(cli, ["preprocess", "--synthetic", "n=800,informative=3,noise=5", "--output-dir", str(other)])
    result = runner.invoke(cli, ["explain", "--processed", str(other / "processed"),
                                 "--model-file", str(model_file), "--output-dir", str(tmp_path / "x")])
    assert result.exit_code == 4

    # Same width (sttl, signal_1, noise_1..3 against sttl, signal_1..2, noise_1..2), other columns.
    renamed = tmp_path / "renamed"
    runner.invoke(cli, ["preprocess", "--synthetic", "n=800,informative=2,noise=3", "--output-dir", str(renamed)])
    result = runner.invoke(cli, ["explain", "--processed", str(renamed / "processed"),
                                 "--model-file", str(model_file), "--output-dir", str(tmp_path / "y")])
    assert result.exit_code == 4
    assert "signal_2" in result.output
    assert not (tmp_path / "y" / "explain-DecisionTree-binary.json").exists()


def test_run_and_report(runner, tmp_path):
    out = tmp_path / "bundle"
    result = runner.invoke(cli, [
        "run", "--synthetic", SYNTHETIC, "--experiment", "full_sensitivity", "--task", "binary",
        "--model", "DecisionTree", "--model", "LogisticRegression", "--output-dir", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert "DecisionTree" in result.output
    assert (out / "manifest.json").exists()

    result = runner.invoke(cli, ["report", str(out)])
    assert result.exit_code == 0, result.output
    assert "files verified" in result.output

    table = out / "full_sensitivity-binary" / "tables" / "sensitivity.csv"
    table.write_text("tampered\n", encoding="utf-8")
    result = runner.invoke(cli, ["report", str(out)])
    assert result.exit_code == 2


def test_output_dir_from_environment(runner, tmp_path):
    out = tmp_path / "from-env"
    result = runner.invoke(cli, ["preprocess", "--synthetic", SYNTHETIC],
                           env={"FLOWLENS_OUTPUT_DIR": str(out)})
    assert result.exit_code == 0, result.output
    assert (out / "processed" / "table.csv").exists()


def test_all_and_experiment_conflict(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--all", "--experiment", "overhead", "--synthetic", SYNTHETIC,
                                 "--output-dir", str(tmp_path)])
    assert result.exit_code == 2


def test_accuracy_guard_exit_code(runner, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"accuracy_guard": 1.0, "models": ["DecisionTree"], "tasks": ["binary"],
                                  "experiments": ["full_sensitivity"]}), encoding="utf-8")
    result = runner.invoke(cli, ["run", "--synthetic", "n=2000,noise=2,label_noise=0.02",
                                 "--config", str(config), "--output-dir", str(tmp_path / "out")])
    assert result.exit_code == 3
    assert "while running full_sensitivity-binary" in result.output


def test_config_file_must_be_json(runner, tmp_path):
    config = tmp_path / "run.json"
    config.write_text("experiments = overhead\n", encoding="utf-8")
    result = runner.invoke(cli, ["run", "--synthetic", SYNTHETIC, "--config", str(config),
                                 "--output-dir", str(tmp_path / "out")])
    assert result.exit_code == 2


@pytest.mark.parametrize("error, code", [
    (ConfigError("bad flag"), 2),
    (BundleError("hash mismatch"), 2),
    (FileNotFoundError("flows.csv"), 2),
    (TrainingError("one class"), 3),
    (TrainingGuardError("KNN", "binary", 0.4, 0.5), 3),
    (LayoutMismatchError("width"), 4),
    (RuntimeError("bug"), 1),
])
def test_exit_code_for(error, code):
    assert exit_code_for(error) == code
