"""
Configuration documents.

Everything a run needs is described by pydantic models: the column schema of a
flow table, the synthetic generator settings, the dataset source, occlusion
settings and the experiment specs. Config files are either key=value text
(schemas) or JSON (experiment runs).
"""

import enum
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exceptions import ConfigError, DataIngestionError
from models.base import ALL_KINDS, ModelKind, TrainConfig
from utils import parse_kv_lines, parse_kv_string, split_list

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
DEFAULT_OUTPUT_DIR = "flowlens-out"
OUTPUT_DIR_ENV = "FLOWLENS_OUTPUT_DIR"


class Task(str, enum.Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"


class ExperimentName(str, enum.Enum):
    FULL_SENSITIVITY = "full_sensitivity"
    SELECTED_SENSITIVITY = "selected_sensitivity"
    TOP2_MASKING = "top2_masking"
    RETRAIN_WITHOUT_TOP = "retrain_without_top"
    OVERHEAD = "overhead"
    MLP_L2_PROBE = "mlp_l2_probe"


# The five experiments of a full run, in output order.
STUDY_EXPERIMENTS = (
    ExperimentName.FULL_SENSITIVITY,
    ExperimentName.SELECTED_SENSITIVITY,
    ExperimentName.TOP2_MASKING,
    ExperimentName.RETRAIN_WITHOUT_TOP,
    ExperimentName.OVERHEAD,
)

TASK_ORDER = (Task.BINARY, Task.MULTICLASS)


class SchemaConfig(BaseModel):
    """Column roles of a flow-record table (UNSW-NB15 defaults)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    label_column: Optional[str] = "label"
    category_column: str = "attack_cat"
    id_columns: List[str] = ["id"]
    drop_columns: List[str] = ["stime", "ltime"]
    categorical_columns: List[str] = []
    normal_class: str = "Normal"
    class_names: Optional[List[str]] = None

    @field_validator("class_names")
    @classmethod
    def validate_class_names(cls, value):
        if value is None:
            return value
        if not value or any(not name for name in value):
            raise ValueError("class list must name at least one non-empty class")
        if len(set(value)) != len(value):
            raise ValueError("class list contains duplicates")
        return value

    def declared_columns(self) -> List[str]:
        columns = [self.category_column]
        if self.label_column:
            columns.insert(0, self.label_column)
        return columns


_SCHEMA_KEYS = {
    "label": "label_column",
    "category": "category_column",
    "id": "id_columns",
    "drop": "drop_columns",
    "categorical": "categorical_columns",
    "normal": "normal_class",
    "classes": "class_names",
}
_SCHEMA_LISTS = {"id_columns", "drop_columns", "categorical_columns", "class_names"}


def parse_schema(text: str) -> SchemaConfig:
    """
    Build a SchemaConfig from key=value lines.

    Args:
        text: e.g. "label = label\\ncategorical = proto,service,state"

    Returns:
        SchemaConfig; "label = none" declares a table without a binary label column
    """
    values: Dict[str, Any] = {}
    for key, raw in parse_kv_lines(text).items():
        field = _SCHEMA_KEYS.get(key.lower())
        if field is None:
            raise ConfigError(f"unknown schema key '{key}' (expected one of {', '.join(_SCHEMA_KEYS)})")
        if field in _SCHEMA_LISTS:
            values[field] = split_list(raw)
        elif field == "label_column" and raw.lower() in ("", "none"):
            values[field] = None
        else:
            values[field] = raw
    try:
        return SchemaConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid schema: {exc}") from exc


def load_schema(path) -> SchemaConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIngestionError(f"cannot read schema file {path}: {exc}") from exc
    return parse_schema(text)


class SyntheticParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_rows: int = Field(default=10_000, ge=4)
    n_informative: int = Field(default=3, ge=1)
    n_noise: int = Field(default=12, ge=0)
    n_categorical: int = Field(default=0, ge=0)
    redundancy: float = Field(default=0.0, ge=0.0, lt=1.0)
    label_noise: float = Field(default=0.01, ge=0.0, le=0.02)
    missing_rate: float = Field(default=0.0, ge=0.0, lt=1.0)

    @classmethod
    def from_string(cls, text: str) -> "SyntheticParams":
        """Parse "n=10000,informative=3,noise=12" style strings."""
        aliases = {
            "n": "n_rows", "rows": "n_rows", "n_rows": "n_rows",
            "informative": "n_informative", "noise": "n_noise",
            "categorical": "n_categorical", "redundancy": "redundancy",
            "label_noise": "label_noise", "missing": "missing_rate", "missing_rate": "missing_rate",
        }
        values = {}
        for key, raw in parse_kv_string(text).items():
            field = aliases.get(key)
            if field is None:
                raise ConfigError(f"unknown synthetic parameter '{key}'")
            values[field] = raw
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigError(f"invalid synthetic parameters '{text}': {exc}") from exc


class DatasetSource(BaseModel):
    """Where rows come from: a CSV file or the synthetic generator."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: Optional[Path] = None
    synthetic: Optional[SyntheticParams] = None
    schema_config: SchemaConfig = SchemaConfig()
    max_rows: Optional[int] = Field(default=None, ge=2)
    train_ratio: float = Field(default=0.8, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def exactly_one_origin(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("a dataset source needs exactly one of 'path' or 'synthetic'")
        return self

    def describe(self) -> str:
        if self.path is not None:
            return str(self.path)
        s = self.synthetic
        return f"synthetic(n={s.n_rows},informative={s.n_informative},noise={s.n_noise})"


class OcclusionBaseline(str, enum.Enum):
    TRAIN_MEAN = "train_mean"
    ZERO = "zero"
    PERMUTE = "permute"


class OcclusionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    baseline: OcclusionBaseline = OcclusionBaseline.TRAIN_MEAN
    permute_seed: int = 0
    groups: Optional[List[str]] = None


_RESERVED_OVERRIDES = {"kind", "seed"}


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: ExperimentName
    task: Task = Task.BINARY
    models: List[ModelKind] = list(ALL_KINDS)
    source: DatasetSource
    seed: int = DEFAULT_SEED
    occlusion: OcclusionConfig = OcclusionConfig()
    removal: Optional[List[str]] = None
    removal_mode: Literal["name", "rank"] = "name"
    removal_pattern: str = "ttl"
    removal_count: int = Field(default=3, ge=1)
    selection_threshold: float = Field(default=0.3, gt=0.0, lt=1.0)
    accuracy_guard: float = Field(default=0.5, ge=0.0, le=1.0)
    masking_k: int = Field(default=2, ge=0)
    repeats: int = Field(default=3, ge=1)
    workers: int = Field(default=1, ge=1)
    train_overrides: Dict[str, Any] = {}

    @field_validator("models")
    @classmethod
    def validate_models(cls, value):
        if not value:
            raise ValueError("at least one model kind is required")
        # Keep the canonical kind order whatever order the user gave.
        return [kind for kind in ALL_KINDS if kind in set(value)]

    @field_validator("removal")
    @classmethod
    def validate_removal(cls, value):
        if value is not None and not value:
            raise ValueError("an explicit removal list must name at least one feature group")
        return value

    @field_validator("train_overrides")
    @classmethod
    def validate_overrides(cls, value):
        unknown = set(value) - (set(TrainConfig.model_fields) - _RESERVED_OVERRIDES)
        if unknown:
            raise ValueError(f"unknown training overrides: {', '.join(sorted(unknown))}")
        return value

    @model_validator(mode="after")
    def removal_only_for_retraining(self):
        if self.removal is not None and self.name is not ExperimentName.RETRAIN_WITHOUT_TOP:
            raise ValueError(
                f"an explicit removal list only applies to {ExperimentName.RETRAIN_WITHOUT_TOP.value}, "
                f"not {self.name.value}"
            )
        return self

    @property
    def label(self) -> str:
        return f"{self.name.value}-{self.task.value}"

    def train_config(self, kind: ModelKind, serial: bool = False, **extra) -> TrainConfig:
        """TrainConfig for one kind: spec seed, forest threads from workers, then overrides."""
        values: Dict[str, Any] = {"n_jobs": 1 if serial else self.workers}
        values.update(self.train_overrides)
        values.update(extra)
        if serial:
            values["n_jobs"] = 1
        return TrainConfig(kind=kind, seed=self.seed, **values)


class RunConfig(BaseModel):
    """A batch of experiments over one dataset; the JSON experiment config file."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    source: DatasetSource
    seed: int = DEFAULT_SEED
    experiments: List[ExperimentName] = list(STUDY_EXPERIMENTS)
    tasks: List[Task] = list(TASK_ORDER)
    models: List[ModelKind] = list(ALL_KINDS)
    occlusion: OcclusionConfig = OcclusionConfig()
    removal: Optional[List[str]] = None
    removal_mode: Literal["name", "rank"] = "name"
    selection_threshold: float = Field(default=0.3, gt=0.0, lt=1.0)
    accuracy_guard: float = Field(default=0.5, ge=0.0, le=1.0)
    workers: int = Field(default=1, ge=1)
    train_overrides: Dict[str, Any] = {}

    @field_validator("experiments", "tasks", "models")
    @classmethod
    def not_empty(cls, value):
        if not value:
            raise ValueError("must name at least one entry")
        return value

    def specs(self) -> List[ExperimentSpec]:
        """One spec per (experiment, task), experiment-major, binary before multi-class."""
        order = list(STUDY_EXPERIMENTS) + [ExperimentName.MLP_L2_PROBE]
        names = [name for name in order if name in set(self.experiments)]
        tasks = [task for task in TASK_ORDER if task in set(self.tasks)]
        return [
            ExperimentSpec(
                name=name,
                task=task,
                models=self.models,
                source=self.source,
                seed=self.seed,
                occlusion=self.occlusion,
                removal=self.removal if name is ExperimentName.RETRAIN_WITHOUT_TOP else None,
                removal_mode=self.removal_mode,
                selection_threshold=self.selection_threshold,
                accuracy_guard=self.accuracy_guard,
                workers=self.workers,
                train_overrides=self.train_overrides,
            )
            for name in names
            for task in tasks
        ]


def load_run_config(path) -> Dict[str, Any]:
    """Read a JSON experiment config file; returns the raw document for merging."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIngestionError(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


class CliConfig(BaseModel):
    """Options collected from the command line, before merging with a config file."""
    model_config = ConfigDict(extra="forbid")

    command: str
    dataset: Optional[Path] = None
    synthetic: Optional[str] = None
    schema_file: Optional[Path] = None
    config_file: Optional[Path] = None
    seed: int = DEFAULT_SEED
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    experiments: List[ExperimentName] = []
    tasks: List[Task] = []
    models: List[ModelKind] = []
    baseline: OcclusionBaseline = OcclusionBaseline.TRAIN_MEAN
    permute_seed: int = 0
    removal: Optional[List[str]] = None
    removal_mode: Literal["name", "rank"] = "name"
    threads: int = Field(default=1, ge=1)
    verbosity: int = 0
    max_rows: Optional[int] = Field(default=None, ge=2)

    def source_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {}
        if self.dataset is not None:
            doc["path"] = str(self.dataset)
        if self.synthetic is not None:
            doc["synthetic"] = SyntheticParams.from_string(self.synthetic).model_dump()
        if self.schema_file is not None:
            doc["schema_config"] = load_schema(self.schema_file).model_dump()
        if self.max_rows is not None:
            doc["max_rows"] = self.max_rows
        return doc

    def to_run_config(self) -> RunConfig:
        """
        Merge flags with the optional JSON config file.

        Defaults < flags < config file; a "source" object in the file replaces
        the flag-built source entirely.
        """
        doc: Dict[str, Any] = {
            "seed": self.seed,
            "occlusion": {"baseline": self.baseline.value, "permute_seed": self.permute_seed},
            "workers": self.threads,
            "removal": self.removal,
            "removal_mode": self.removal_mode,
        }
        source = self.source_document()
        if source:
            doc["source"] = source
        if self.experiments:
            doc["experiments"] = [e.value for e in self.experiments]
        if self.tasks:
            doc["tasks"] = [t.value for t in self.tasks]
        if self.models:
            doc["models"] = [m.value for m in self.models]
        if self.config_file is not None:
            doc.update(load_run_config(self.config_file))
        if "source" not in doc:
            raise ConfigError("no dataset given: pass --dataset, --synthetic or a config file with a source")
        try:
            return RunConfig.model_validate(doc)
        except ValidationError as exc:
            raise ConfigError(f"invalid run configuration: {exc}") from exc
