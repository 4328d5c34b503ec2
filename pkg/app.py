"""
flowlens command line.

    flowlens preprocess --synthetic n=20000,informative=3,noise=12
    flowlens run --all --synthetic n=20000 --seed 7
    flowlens train --processed flowlens-out/processed --model RandomForest
    flowlens explain --processed flowlens-out/processed --model-file model.json
    flowlens report flowlens-out
"""

import functools
import logging
from pathlib import Path
from typing import Dict, List, Optional

import click
from pydantic import ValidationError

from config import (
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SEED,
    OUTPUT_DIR_ENV,
    STUDY_EXPERIMENTS,
    CliConfig,
    DatasetSource,
    ExperimentName,
    OcclusionBaseline,
    OcclusionConfig,
    Task,
)
from exceptions import ConfigError, FlowLensError, exit_code_for
from models import ALL_KINDS, ModelKind, TrainConfig, accuracy, load_model, predict, save_model, train
from services.data import load_processed, prepare, save_processed
from services.experiments import run_batch
from services.explain import degradation_table, sensitivity
from services.report import (
    canonical_json,
    csv_text,
    format_summary,
    summary_rows,
    verify_bundle,
    write_preprocess_outputs,
)
from utils import TOOLKIT_NAME, TOOLKIT_VERSION, parse_kv_string, split_list

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXPERIMENT_CHOICES = click.Choice([e.value for e in ExperimentName])
TASK_CHOICES = click.Choice([t.value for t in Task])
MODEL_CHOICES = click.Choice([k.value for k in ALL_KINDS])
BASELINE_CHOICES = click.Choice([b.value for b in OcclusionBaseline])


def handle_errors(func):
    """Turn toolkit errors into a one-line diagnostic and the matching exit code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (FlowLensError, OSError) as exc:
            notes = getattr(exc, "__notes__", [])
            suffix = f" ({'; '.join(notes)})" if notes else ""
            click.echo(f"error: {exc}{suffix}", err=True)
            logger.debug("command failed", exc_info=True)
            raise click.exceptions.Exit(exit_code_for(exc))
    return wrapper


def dataset_options(func):
    """--dataset/--synthetic/--schema/--seed/--max-rows, shared by preprocess and run."""
    options = [
        click.option("--dataset", type=click.Path(path_type=Path), default=None,
                     help="CSV file to load (UNSW-NB15 layout unless --schema says otherwise)."),
        click.option("--synthetic", default=None, metavar="SPEC",
                     help="Generate rows instead, e.g. 'n=20000,informative=3,noise=12'."),
        click.option("--schema", "schema_file", type=click.Path(path_type=Path), default=None,
                     help="key = value file naming label, category, id, drop and categorical columns."),
        click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True,
                     help="Seed for subsampling, the split, the generator and every model."),
        click.option("--max-rows", type=click.IntRange(min=2), default=None,
                     help="Subsample the cleaned table to at most this many rows."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def output_option(func):
    return click.option(
        "--output-dir", type=click.Path(path_type=Path), default=DEFAULT_OUTPUT_DIR, show_default=True,
        envvar=OUTPUT_DIR_ENV, show_envvar=True, help="Directory for every file the command writes.",
    )(func)


def baseline_options(func):
    func = click.option("--permute-seed", type=int, default=0, show_default=True,
                        help="Seed of the row shuffle used by the permute baseline.")(func)
    return click.option("--baseline", type=BASELINE_CHOICES, default=OcclusionBaseline.TRAIN_MEAN.value,
                        show_default=True, help="Value written into occluded columns.")(func)


def _source(cli: CliConfig) -> DatasetSource:
    doc = cli.source_document()
    if "path" not in doc and "synthetic" not in doc:
        raise ConfigError("no dataset given: pass --dataset or --synthetic")
    try:
        return DatasetSource.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid dataset options: {exc}") from exc


@click.group()
@click.version_option(TOOLKIT_VERSION, prog_name=TOOLKIT_NAME)
@click.option("-v", "--verbose", "verbosity", count=True,
              help="-v for progress and info messages, -vv for debug output.")
@click.pass_context
def cli(ctx: click.Context, verbosity: int):
    """Compare how intrusion-detection classifiers depend on their input features."""
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["verbosity"] = verbosity


@cli.command("preprocess")
@dataset_options
@output_option
@click.option("--threshold", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True), default=0.3,
              show_default=True, help="|r| threshold of the correlation-based selection.")
@click.pass_context
@handle_errors
def cmd_preprocess(ctx, dataset, synthetic, schema_file, seed, max_rows, output_dir, threshold):
    """Clean, encode, scale and split a dataset; write the processed table and its analysis."""
    cli_config = CliConfig(command="preprocess", dataset=dataset, synthetic=synthetic, schema_file=schema_file,
                           seed=seed, output_dir=output_dir, max_rows=max_rows,
                           verbosity=ctx.obj["verbosity"])
    prepared = prepare(_source(cli_config), seed)
    save_processed(prepared, output_dir / "processed")
    written = write_preprocess_outputs(prepared, output_dir, threshold=threshold)
    summary = prepared.summary()
    click.echo(f"{summary['rows']} rows ({summary['train_rows']} train / {summary['test_rows']} test), "
               f"{summary['features']} features in {summary['groups']} groups")
    click.echo(f"wrote {output_dir / 'processed'} and {len(written)} analysis files to {output_dir}")


@cli.command("run")
@dataset_options
@output_option
@click.option("--experiment", "experiments", type=EXPERIMENT_CHOICES, multiple=True,
              help="Experiment to run; repeat for several.")
@click.option("--all", "run_all", is_flag=True, help="Run the five study experiments.")
@click.option("--task", "tasks", type=TASK_CHOICES, multiple=True, help="Restrict to a task (default: both).")
@click.option("--model", "models", type=MODEL_CHOICES, multiple=True, help="Restrict to a model kind.")
@baseline_options
@click.option("--removal", default=None, metavar="GROUPS",
              help="Comma-separated groups removed by the retraining experiment.")
@click.option("--removal-mode", type=click.Choice(["name", "rank"]), default="name", show_default=True,
              help="Without --removal: drop groups matching 'ttl' (name) or the top-3 by degradation (rank).")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker threads for forests and occlusion sweeps; 1 runs everything serially.")
@click.option("--config", "config_file", type=click.Path(path_type=Path), default=None,
              help="JSON run configuration; its keys override the flags.")
@click.pass_context
@handle_errors
def cmd_run(ctx, dataset, synthetic, schema_file, seed, max_rows, output_dir, experiments, run_all,
            tasks, models, baseline, permute_seed, removal, removal_mode, threads, config_file):
    """Run experiments and write a result bundle."""
    if run_all and experiments:
        raise ConfigError("--all and --experiment are mutually exclusive")
    chosen = list(STUDY_EXPERIMENTS) if run_all else [ExperimentName(e) for e in experiments]
    cli_config = CliConfig(
        command="run",
        dataset=dataset,
        synthetic=synthetic,
        schema_file=schema_file,
        config_file=config_file,
        seed=seed,
        output_dir=output_dir,
        experiments=chosen,
        tasks=[Task(t) for t in tasks],
        models=[ModelKind(m) for m in models],
        baseline=OcclusionBaseline(baseline),
        permute_seed=permute_seed,
        removal=split_list(removal) if removal else None,
        removal_mode=removal_mode,
        threads=threads,
        verbosity=ctx.obj["verbosity"],
        max_rows=max_rows,
    )
    run_config = cli_config.to_run_config()
    results = run_batch(run_config, output_dir=output_dir, progress=ctx.obj["verbosity"] > 0)
    rows = [row for result in results for row in summary_rows(result.model_dump(mode="json"))]
    click.echo(format_summary(rows))
    click.echo(f"wrote {len(results)} experiment results to {output_dir}")


def _parse_overrides(values) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for value in values:
        pairs = parse_kv_string(value)
        if not pairs:
            raise ConfigError(f"expected key=value, got '{value}'")
        repeated = overrides.keys() & pairs.keys()
        if repeated:
            raise ConfigError(f"--set gives {', '.join(sorted(repeated))} more than once")
        overrides.update(pairs)
    return overrides


@cli.command("train")
@click.option("--processed", type=click.Path(path_type=Path), required=True,
              help="Directory written by 'preprocess' (its processed/ subdirectory).")
@click.option("--model", "model_kind", type=MODEL_CHOICES, required=True, help="Model kind to train.")
@click.option("--task", type=TASK_CHOICES, default=Task.BINARY.value, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Training setting override, e.g. --set n_trees=20; repeatable.")
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help="Model file to write (default: <processed>/<model>-<task>.json).")
@handle_errors
def cmd_train(processed, model_kind, task, seed, overrides, output):
    """Train one model on the training split of a processed table and save it."""
    prepared = load_processed(processed)
    kind, task = ModelKind(model_kind), Task(task)
    try:
        cfg = TrainConfig(kind=kind, seed=seed, **_parse_overrides(overrides))
    except ValidationError as exc:
        raise ConfigError(f"invalid training settings: {exc}") from exc
    train_table, test_table = prepared.train_table(), prepared.test_table()
    model = train(kind, train_table.matrix, train_table.labels(task), cfg,
                  class_count=train_table.class_count(task), feature_names=train_table.feature_names)
    pred = predict(model, test_table.matrix, test_table.feature_names)
    metrics = accuracy(pred, test_table.labels(task), model.class_count)
    path = save_model(model, output or processed / f"{kind.value}-{task.value}.json")
    click.echo(f"{kind.value} ({task.value}): test accuracy {metrics.accuracy:.4f}, "
               f"{model.meta.epochs_run} epochs ({model.meta.stop_reason.value})")
    click.echo(f"saved {path}")


@cli.command("explain")
@click.option("--processed", type=click.Path(path_type=Path), required=True,
              help="Directory written by 'preprocess' (its processed/ subdirectory).")
@click.option("--model-file", type=click.Path(path_type=Path), required=True, help="Model saved by 'train'.")
@click.option("--task", type=TASK_CHOICES, default=None,
              help="Label to score against (default: inferred from the model's class count).")
@baseline_options
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True)
@output_option
@click.pass_context
@handle_errors
def cmd_explain(ctx, processed, model_file, task, baseline, permute_seed, threads, output_dir):
    """Occlusion sweep of a saved model over the test split; writes JSON and CSV."""
    prepared = load_processed(processed)
    model = load_model(model_file)
    if task is None:
        task = Task.BINARY if model.class_count == 2 else Task.MULTICLASS
    test = prepared.test_table()
    cfg = OcclusionConfig(baseline=OcclusionBaseline(baseline), permute_seed=permute_seed)
    report = sensitivity(model, test.matrix, test.labels(Task(task)), test.groups, prepared.train_means,
                         cfg=cfg, workers=threads, task=Task(task), progress=ctx.obj["verbosity"] > 0,
                         feature_names=test.feature_names)

    output_dir.mkdir(parents=True, exist_ok=True)
    stem = f"explain-{model.kind.value}-{Task(task).value}"
    (output_dir / f"{stem}.json").write_text(canonical_json(report.model_dump(mode="json")), encoding="utf-8")
    (output_dir / f"{stem}.csv").write_text(csv_text(degradation_table([report])), encoding="utf-8")
    click.echo(f"baseline accuracy {report.baseline_accuracy:.4f}; top groups: {', '.join(report.top(3))}")
    click.echo(f"wrote {output_dir / stem}.json and .csv")


@cli.command("report")
@click.argument("bundle", type=click.Path(path_type=Path))
@handle_errors
def cmd_report(bundle):
    """Verify a bundle's hashes and print its summary table."""
    verified = verify_bundle(bundle)
    rows: List[Dict] = [row for doc in verified.result_documents() for row in summary_rows(doc)]
    click.echo(format_summary(rows))
    click.echo(f"{len(verified.manifest.files)} files verified")


def main(argv: Optional[List[str]] = None):
    cli.main(args=argv, prog_name=TOOLKIT_NAME)


if __name__ == "__main__":
    main()
