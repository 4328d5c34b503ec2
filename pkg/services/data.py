"""
Flow-table ingestion: load, clean, encode, scale and split.

Tables move through the pipeline as immutable values:

    load_csv / make_synthetic -> RawTable
    drop_incomplete, subsample -> RawTable
    encode                     -> DataTable (one-hot groups, label vectors)
    split, fit_scaler, apply_scaler
    prepare                    -> PreparedData (everything an experiment needs)
"""

import csv
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import DatasetSource, SchemaConfig, Task
from exceptions import (
    DataIngestionError,
    EmptyDatasetError,
    InputError,
    LayoutMismatchError,
    RaggedRowError,
    SchemaError,
)

logger = logging.getLogger(__name__)

MISSING_SENTINELS = frozenset({"", "-", "NaN", "nan"})

BINARY_CLASS_NAMES = ("normal", "intrusive")

# UNSW-NB15 attack families, used to label synthetic intrusions.
ATTACK_FAMILIES = (
    "Analysis", "Backdoor", "DoS", "Exploits", "Fuzzers",
    "Generic", "Reconnaissance", "Shellcode", "Worms",
)

PROTOCOL_LEVELS = ("tcp", "udp", "arp", "icmp", "ospf")

PROCESSED_FORMAT = "flowlens-processed"
PROCESSED_VERSION = 1


def _read_only(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class RawTable:
    """
    Typed cells straight from a file or the generator.

    Numeric columns are float64 with NaN for missing cells, text columns are
    object with None for missing cells. The frame is never modified in place.
    """
    frame: pd.DataFrame

    @property
    def column_names(self) -> Tuple[str, ...]:
        return tuple(self.frame.columns)

    @property
    def n_rows(self) -> int:
        return int(self.frame.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.frame.shape[1])

    def is_numeric(self, column: str) -> bool:
        return pd.api.types.is_float_dtype(self.frame[column].dtype)

    def to_csv(self, path) -> Path:
        """Write the table in the layout load_csv reads back; missing cells become "-"."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, na_rep="-", float_format="%.17g")
        return path


def _typed_column(cells: pd.Series, force_text: bool) -> pd.Series:
    stripped = cells.str.strip()
    missing = stripped.isin(MISSING_SENTINELS)
    present = stripped[~missing]
    if not force_text:
        parsed = pd.to_numeric(present, errors="coerce")
        if parsed.notna().all():
            values = np.full(cells.size, np.nan)
            try:
                values[~missing.to_numpy()] = present.to_numpy(dtype=object).astype(np.float64)
            except ValueError:
                pass
            else:
                return pd.Series(values, name=cells.name)
    return pd.Series(stripped.where(~missing, None).to_numpy(dtype=object), name=cells.name, dtype=object)


def load_csv(path, schema: Optional[SchemaConfig] = None) -> RawTable:
    """
    Read a comma-separated flow table with a header row.

    Args:
        path: CSV file
        schema: Optional column roles; its categorical columns stay text and
            its label/category columns must be present

    Returns:
        RawTable with per-column types

    Raises:
        DataIngestionError: unreadable file, no header, or inf in a numeric column
        RaggedRowError: a row's cell count differs from the header
        SchemaError: duplicate header names or missing declared columns
    """
    path = Path(path)
    rows: List[List[str]] = []
    lines: List[int] = []
    try:
        with path.open(newline="", encoding="utf-8-sig") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise DataIngestionError(f"{path}: file is empty, expected a header row")
            header = [name.strip() for name in header]
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise RaggedRowError(
                        f"{path}: line {reader.line_num} has {len(row)} cells, header has {len(header)}"
                    )
                rows.append(row)
                lines.append(reader.line_num)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataIngestionError(f"cannot read {path}: {exc}") from exc

    columns = pd.Index(header)
    duplicates = sorted(set(columns[columns.duplicated()]))
    if duplicates:
        raise SchemaError(f"{path}: duplicate column names: {', '.join(duplicates)}")
    if schema is not None:
        absent = [name for name in schema.declared_columns() if name not in columns]
        if absent:
            raise SchemaError(f"{path}: missing declared columns: {', '.join(absent)}")

    forced = set(schema.categorical_columns) if schema is not None else set()
    if schema is not None:
        forced.add(schema.category_column)
    cells = pd.DataFrame(rows, columns=header, dtype=object)
    frame = pd.DataFrame({
        name: _typed_column(cells[name].astype(str), name in forced) for name in header
    })
    for position, name in enumerate(header):
        if not pd.api.types.is_float_dtype(frame[name].dtype):
            continue
        infinite = np.flatnonzero(np.isinf(frame[name].to_numpy()))
        if infinite.size:
            first = int(infinite[0])
            cell = rows[first][position].strip()
            raise DataIngestionError(
                f"{path}: line {lines[first]} has the non-finite value '{cell}' in column '{name}'; "
                "replace it with a number or leave the cell empty"
            )
    logger.info("loaded %s: %d rows x %d columns", path, len(rows), len(header))
    return RawTable(frame)


def drop_incomplete(t: RawTable) -> RawTable:
    """Keep exactly the rows without missing cells, in order."""
    complete = ~t.frame.isna().any(axis=1)
    if not complete.any():
        raise EmptyDatasetError("no complete rows: every row has at least one missing cell")
    dropped = int((~complete).sum())
    if dropped:
        logger.info("dropped %d incomplete rows, %d remain", dropped, int(complete.sum()))
    return RawTable(t.frame.loc[complete].reset_index(drop=True))


def subsample(t: RawTable, max_rows: int, seed: int) -> RawTable:
    """Seeded row subsample that keeps the original row order."""
    if max_rows < 1:
        raise InputError(f"max_rows must be positive, got {max_rows}")
    if t.n_rows <= max_rows:
        return t
    keep = np.sort(np.random.default_rng(seed).choice(t.n_rows, size=max_rows, replace=False))
    return RawTable(t.frame.iloc[keep].reset_index(drop=True))


class ColumnKind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BINARY_LABEL = "binary_label"
    MULTICLASS_LABEL = "multiclass_label"
    ID = "id"
    DROPPED = "dropped"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind = ColumnKind.NUMERIC
    onehot_group: Optional[str] = None

    @property
    def group(self) -> str:
        return self.onehot_group or self.name


def column_kinds(t: RawTable, schema: SchemaConfig) -> Dict[str, ColumnKind]:
    """
    Role of every raw column, in column order.

    Label roles win over id and drop roles. Text columns and the schema's
    `categorical` columns are CATEGORICAL, every other column NUMERIC.
    """
    roles: Dict[str, ColumnKind] = {name: ColumnKind.DROPPED for name in schema.drop_columns}
    roles.update({name: ColumnKind.ID for name in schema.id_columns})
    roles[schema.category_column] = ColumnKind.MULTICLASS_LABEL
    if schema.label_column:
        roles[schema.label_column] = ColumnKind.BINARY_LABEL
    forced = set(schema.categorical_columns)
    kinds: Dict[str, ColumnKind] = {}
    for name in t.column_names:
        if name in roles:
            kinds[name] = roles[name]
        elif t.is_numeric(name) and name not in forced:
            kinds[name] = ColumnKind.NUMERIC
        else:
            kinds[name] = ColumnKind.CATEGORICAL
    return kinds


@dataclass(frozen=True)
class DataTable:
    """
    Encoded feature matrix with its labels.

    A feature group is either a numeric column on its own or all indicator
    columns of one categorical source column; groups are what explanations
    occlude and what selection keeps or drops.
    """
    specs: Tuple[ColumnSpec, ...]
    matrix: np.ndarray
    y_binary: np.ndarray
    y_multi: np.ndarray
    class_names: Tuple[str, ...]

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.specs):
            raise LayoutMismatchError(
                f"matrix shape {self.matrix.shape} does not match {len(self.specs)} column specs"
            )
        n = self.matrix.shape[0]
        if self.y_binary.shape != (n,) or self.y_multi.shape != (n,):
            raise InputError("label vectors must have one entry per row")
        if n and int(self.y_multi.max()) >= len(self.class_names):
            raise SchemaError("class names do not cover every multi-class label")
        for name in ("matrix", "y_binary", "y_multi"):
            value = getattr(self, name)
            if value.flags.writeable:
                object.__setattr__(self, name, _read_only(value))

    @property
    def n_rows(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.matrix.shape[1])

    @cached_property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(spec.name for spec in self.specs)

    @cached_property
    def groups(self) -> Dict[str, Tuple[int, ...]]:
        """Feature group -> column indices, in column order."""
        layout: Dict[str, List[int]] = {}
        for index, spec in enumerate(self.specs):
            layout.setdefault(spec.group, []).append(index)
        return {name: tuple(columns) for name, columns in layout.items()}

    @property
    def group_names(self) -> Tuple[str, ...]:
        return tuple(self.groups)

    def labels(self, task) -> np.ndarray:
        return self.y_binary if Task(task) is Task.BINARY else self.y_multi

    def class_count(self, task) -> int:
        return 2 if Task(task) is Task.BINARY else len(self.class_names)

    def task_class_names(self, task) -> Tuple[str, ...]:
        return BINARY_CLASS_NAMES if Task(task) is Task.BINARY else self.class_names

    def take(self, rows) -> "DataTable":
        rows = np.asarray(rows, dtype=np.int64)
        return DataTable(self.specs, self.matrix[rows], self.y_binary[rows], self.y_multi[rows], self.class_names)

    def _columns(self, columns: Sequence[int]) -> "DataTable":
        columns = list(columns)
        if not columns:
            raise InputError("removing these feature groups leaves no features")
        return DataTable(
            tuple(self.specs[c] for c in columns),
            self.matrix[:, columns],
            self.y_binary,
            self.y_multi,
            self.class_names,
        )

    def check_groups(self, names: Iterable[str]) -> List[str]:
        names = list(names)
        unknown = [name for name in names if name not in self.groups]
        if unknown:
            raise LayoutMismatchError(f"unknown feature groups: {', '.join(unknown)}")
        return names

    def without_groups(self, names: Iterable[str]) -> "DataTable":
        drop = set(self.check_groups(names))
        return self._columns([i for i, spec in enumerate(self.specs) if spec.group not in drop])

    def with_groups(self, names: Iterable[str]) -> "DataTable":
        keep = set(self.check_groups(names))
        return self._columns([i for i, spec in enumerate(self.specs) if spec.group in keep])


def _label_vectors(t: RawTable, schema: SchemaConfig) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    frame = t.frame
    category = frame[schema.category_column]
    if pd.api.types.is_float_dtype(category.dtype):
        category = category.map(lambda v: format(v, "g"))
    category = category.astype(str).str.strip()
    if (category == "").any():
        raise SchemaError(f"column '{schema.category_column}' has empty categories")

    if schema.class_names is not None:
        outside = sorted(set(category) - set(schema.class_names))
        if outside:
            raise SchemaError(
                f"categories outside the declared class list: {', '.join(outside)}"
            )
        class_names = tuple(schema.class_names)
    else:
        class_names = tuple(sorted(set(category)))
    index = {name: i for i, name in enumerate(class_names)}
    y_multi = category.map(index).to_numpy(dtype=np.int64)

    derived = (category != schema.normal_class).to_numpy(dtype=np.int64)
    if schema.label_column is None:
        return derived, y_multi, class_names

    label = frame[schema.label_column]
    if not pd.api.types.is_float_dtype(label.dtype) or not label.isin([0.0, 1.0]).all():
        raise SchemaError(f"label column '{schema.label_column}' must hold only 0 and 1")
    y_binary = label.to_numpy(dtype=np.int64)
    disagree = int(np.sum(y_binary != derived))
    if disagree:
        logger.warning("%d rows disagree between '%s' and '%s' != %s",
                       disagree, schema.label_column, schema.category_column, schema.normal_class)
    return y_binary, y_multi, class_names


def _numeric_features(name: str, series: pd.Series) -> List[Tuple[ColumnSpec, np.ndarray]]:
    return [(ColumnSpec(name, ColumnKind.NUMERIC), series.to_numpy(dtype=np.float64))]


def _indicator_features(name: str, series: pd.Series) -> List[Tuple[ColumnSpec, np.ndarray]]:
    """One 0/1 column per sorted level, all in the group `name`."""
    text = series.map(lambda v: format(v, "g") if isinstance(v, float) else str(v))
    levels = sorted(set(text))
    if len(levels) == 1:
        logger.warning("categorical column '%s' has a single level '%s'", name, levels[0])
    return [
        (ColumnSpec(f"{name}={level}", ColumnKind.CATEGORICAL, onehot_group=name),
         (text == level).to_numpy(dtype=np.float64))
        for level in levels
    ]


# Kinds missing here (labels, ids, dropped columns) never become features.
_FEATURE_ENCODERS = {
    ColumnKind.NUMERIC: _numeric_features,
    ColumnKind.CATEGORICAL: _indicator_features,
}


def encode(t: RawTable, schema: Optional[SchemaConfig] = None) -> DataTable:
    """
    Turn a complete RawTable into a numeric DataTable.

    Args:
        t: Table without missing cells (see drop_incomplete)
        schema: Column roles (UNSW-NB15 defaults when omitted)

    Returns:
        DataTable whose categorical columns became sorted "<col>=<level>"
        indicator groups, with id, drop, label and category columns removed
    """
    schema = schema or SchemaConfig()
    missing_columns = [name for name in schema.declared_columns() if name not in t.frame.columns]
    if missing_columns:
        raise SchemaError(f"missing declared columns: {', '.join(missing_columns)}")
    incomplete = [name for name in t.column_names if t.frame[name].isna().any()]
    if incomplete:
        raise SchemaError(f"missing cells in {', '.join(incomplete)}; run drop_incomplete first")
    if t.n_rows == 0:
        raise EmptyDatasetError("cannot encode an empty table")

    y_binary, y_multi, class_names = _label_vectors(t, schema)

    specs: List[ColumnSpec] = []
    columns: List[np.ndarray] = []
    for name, kind in column_kinds(t, schema).items():
        encoder = _FEATURE_ENCODERS.get(kind)
        if encoder is None:
            continue
        for spec, values in encoder(name, t.frame[name]):
            specs.append(spec)
            columns.append(values)

    if not specs:
        raise SchemaError("no feature columns left after removing label, id and drop columns")
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        raise SchemaError("indicator column names collide with existing columns")
    matrix = np.column_stack(columns)
    logger.info("encoded %d rows into %d features (%d classes)", matrix.shape[0], matrix.shape[1], len(class_names))
    return DataTable(tuple(specs), matrix, y_binary, y_multi, class_names)


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray


def fit_scaler(t: DataTable, idx) -> ScalerParams:
    """Per-feature min and max over the given (training) rows."""
    rows = t.matrix[np.asarray(idx, dtype=np.int64)]
    if rows.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on zero rows")
    return ScalerParams(_read_only(rows.min(axis=0)), _read_only(rows.max(axis=0)))


def apply_scaler(t: DataTable, p: ScalerParams) -> DataTable:
    """(v - min) / (max - min) clamped to [0, 1]; constant columns map to 0."""
    if p.minimum.shape != (t.n_features,):
        raise LayoutMismatchError(f"scaler has {p.minimum.size} features, table has {t.n_features}")
    span = p.maximum - p.minimum
    varying = span > 0
    scaled = np.zeros_like(t.matrix)
    scaled[:, varying] = (t.matrix[:, varying] - p.minimum[varying]) / span[varying]
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return DataTable(t.specs, scaled, t.y_binary, t.y_multi, t.class_names)


@dataclass(frozen=True)
class SplitIndices:
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    ratio: float


def split(n_rows: int, ratio: float, seed: int) -> SplitIndices:
    """
    Seeded train/test partition.

    Returns:
        SplitIndices with round(ratio * n_rows) sorted training rows and the
        remaining rows, also sorted, as the test side
    """
    if not 0.0 < ratio < 1.0:
        raise InputError(f"split ratio must lie strictly between 0 and 1, got {ratio}")
    if n_rows < 2:
        raise InputError(f"need at least 2 rows to split, got {n_rows}")
    n_train = int(math.floor(ratio * n_rows + 0.5))
    if n_train == 0 or n_train == n_rows:
        raise EmptyDatasetError(f"ratio {ratio} on {n_rows} rows leaves one side of the split empty")
    order = np.random.default_rng(seed).permutation(n_rows)
    return SplitIndices(
        train_idx=_read_only(np.sort(order[:n_train])),
        test_idx=_read_only(np.sort(order[n_train:])),
        seed=seed,
        ratio=ratio,
    )


class ClassShare(NamedTuple):
    name: str
    count: int
    fraction: float


def class_distribution(t: DataTable, task=Task.MULTICLASS) -> List[ClassShare]:
    """Class fractions, largest first (ties by class index), empty classes omitted."""
    labels = t.labels(task)
    names = t.task_class_names(task)
    counts = np.bincount(labels, minlength=len(names))
    total = int(counts.sum())
    if total == 0:
        raise EmptyDatasetError("no rows to count")
    order = sorted((i for i in range(len(names)) if counts[i] > 0), key=lambda i: (-counts[i], i))
    return [ClassShare(names[i], int(counts[i]), float(counts[i] / total)) for i in order]


def synthetic_informative_names(n_informative: int) -> List[str]:
    return ["sttl"] + [f"signal_{i}" for i in range(1, n_informative)]


def make_synthetic(
    n_rows: int,
    n_informative: int,
    n_noise: int,
    n_categorical: int,
    seed: int,
    redundancy: float = 0.0,
    label_noise: float = 0.01,
    missing_rate: float = 0.0,
) -> RawTable:
    """
    Generate a labelled flow-like table with known informative columns.

    Informative values are x_i = (1 - redundancy) * u_i + redundancy * z with
    u_i, z ~ U(0, 1). The first one is published as "sttl" (a 0..254 hop
    count), the others as "signal_<i>" on a 0..1000 scale. A row is intrusive
    when sum(x) > n_informative / 2, after which a label_noise share of labels
    is flipped; intrusions are named after the attack family indexed by their
    largest informative value. "noise_<j>" columns are log-normal byte-count
    lookalikes and "cat_<j>" columns are protocol-like text, both independent
    of the label.
    """
    if n_rows < 2 or n_informative < 1 or n_noise < 0 or n_categorical < 0:
        raise InputError("synthetic data needs n_rows >= 2, n_informative >= 1 and non-negative counts")
    if not 0.0 <= redundancy < 1.0:
        raise InputError(f"redundancy must lie in [0, 1), got {redundancy}")
    if not 0.0 <= label_noise <= 0.02:
        raise InputError(f"label noise must lie in [0, 0.02], got {label_noise}")
    if not 0.0 <= missing_rate < 1.0:
        raise InputError(f"missing rate must lie in [0, 1), got {missing_rate}")

    rng = np.random.default_rng(seed)
    shared = rng.random((n_rows, 1))
    informative = (1.0 - redundancy) * rng.random((n_rows, n_informative)) + redundancy * shared
    label = (informative.sum(axis=1) > n_informative / 2.0).astype(np.int64)
    flips = rng.random(n_rows) < label_noise
    label[flips] ^= 1
    families = np.array(ATTACK_FAMILIES, dtype=object)[np.argmax(informative, axis=1) % len(ATTACK_FAMILIES)]
    attack_cat = np.where(label == 1, families, "Normal")

    columns: Dict[str, np.ndarray] = {"id": np.arange(1, n_rows + 1, dtype=np.float64)}
    for i, name in enumerate(synthetic_informative_names(n_informative)):
        if i == 0:
            columns[name] = np.rint(informative[:, 0] * 254.0)
        else:
            columns[name] = informative[:, i] * 1000.0
    for j in range(1, n_noise + 1):
        columns[f"noise_{j}"] = np.rint(rng.lognormal(0.0, 2.0, n_rows) * 100.0)
    for j in range(1, n_categorical + 1):
        levels = np.array(PROTOCOL_LEVELS[:2 + (j - 1) % (len(PROTOCOL_LEVELS) - 1)], dtype=object)
        picks = rng.integers(0, levels.size, n_rows)
        picks[:2] = [0, 1]
        columns[f"cat_{j}"] = levels[picks]

    frame = pd.DataFrame(columns)
    if missing_rate > 0.0:
        feature_names = [name for name in frame.columns if name != "id"]
        holes = rng.random((n_rows, len(feature_names))) < missing_rate
        for k, name in enumerate(feature_names):
            frame[name] = frame[name].where(~holes[:, k], None if frame[name].dtype == object else np.nan)
    frame["label"] = label.astype(np.float64)
    frame["attack_cat"] = pd.Series(attack_cat, dtype=object)
    return RawTable(frame)


@dataclass(frozen=True)
class PreparedData:
    """A scaled table with its split: the unit every experiment consumes."""
    table: DataTable
    split: SplitIndices
    scaler: ScalerParams
    seed: int
    source: str = ""
    rows_loaded: int = 0
    rows_complete: int = 0
    train_means: np.ndarray = field(init=False)

    def __post_init__(self):
        means = self.table.matrix[self.split.train_idx].mean(axis=0)
        object.__setattr__(self, "train_means", _read_only(means))

    def train_table(self) -> DataTable:
        return self.table.take(self.split.train_idx)

    def test_table(self) -> DataTable:
        return self.table.take(self.split.test_idx)

    def summary(self) -> Dict[str, object]:
        return {
            "source": self.source,
            "rows_loaded": self.rows_loaded,
            "rows_complete": self.rows_complete,
            "rows": self.table.n_rows,
            "train_rows": int(self.split.train_idx.size),
            "test_rows": int(self.split.test_idx.size),
            "features": self.table.n_features,
            "groups": len(self.table.groups),
            "class_names": list(self.table.class_names),
            "split_seed": self.split.seed,
            "split_ratio": self.split.ratio,
        }


def prepare(source: DatasetSource, seed: int) -> PreparedData:
    """Load or generate rows, then clean, subsample, encode, split and scale them."""
    schema = source.schema_config
    if source.path is not None:
        raw = load_csv(source.path, schema)
    else:
        params = source.synthetic
        raw = make_synthetic(seed=seed, **params.model_dump())
    loaded = raw.n_rows
    raw = drop_incomplete(raw)
    complete = raw.n_rows
    if source.max_rows is not None:
        raw = subsample(raw, source.max_rows, seed)
    encoded = encode(raw, schema)
    indices = split(encoded.n_rows, source.train_ratio, seed)
    scaler = fit_scaler(encoded, indices.train_idx)
    return PreparedData(
        table=apply_scaler(encoded, scaler),
        split=indices,
        scaler=scaler,
        seed=seed,
        source=source.describe(),
        rows_loaded=loaded,
        rows_complete=complete,
    )


def save_processed(prepared: PreparedData, directory) -> Tuple[Path, Path]:
    """
    Write table.csv (features, y_binary, y_multi, split) and meta.json.

    table.csv has a plain header and loads with load_csv.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = prepared.table
    frame = pd.DataFrame(np.asarray(table.matrix), columns=list(table.feature_names))
    frame["y_binary"] = table.y_binary
    frame["y_multi"] = table.y_multi
    side = np.full(table.n_rows, "test", dtype=object)
    side[prepared.split.train_idx] = "train"
    frame["split"] = side
    table_path = RawTable(frame).to_csv(directory / "table.csv")

    meta = {
        "format": PROCESSED_FORMAT,
        "version": PROCESSED_VERSION,
        "features": [{"name": s.name, "kind": s.kind.value, "onehot_group": s.onehot_group} for s in table.specs],
        "class_names": list(table.class_names),
        "seed": prepared.seed,
        "train_ratio": prepared.split.ratio,
        "source": prepared.source,
        "rows_loaded": prepared.rows_loaded,
        "rows_complete": prepared.rows_complete,
        "scaler": {"min": prepared.scaler.minimum.tolist(), "max": prepared.scaler.maximum.tolist()},
    }
    meta_path = directory / "meta.json"
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    logger.info("wrote processed table to %s", directory)
    return table_path, meta_path


def _feature_spec(doc: Dict[str, Optional[str]]) -> ColumnSpec:
    group = doc.get("onehot_group")
    default = ColumnKind.CATEGORICAL if group else ColumnKind.NUMERIC
    kind = ColumnKind(doc.get("kind") or default)
    if kind not in _FEATURE_ENCODERS:
        raise DataIngestionError(f"feature '{doc['name']}' has non-feature kind '{kind.value}'")
    return ColumnSpec(doc["name"], kind, group)


def load_processed(directory) -> PreparedData:
    """Inverse of save_processed."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataIngestionError(f"cannot read {meta_path}: {exc}") from exc
    if meta.get("format") != PROCESSED_FORMAT:
        raise DataIngestionError(f"{meta_path} is not a processed-table description")

    raw = load_csv(directory / "table.csv")
    specs = tuple(_feature_spec(f) for f in meta["features"])
    expected = [s.name for s in specs] + ["y_binary", "y_multi", "split"]
    if list(raw.column_names) != expected:
        raise LayoutMismatchError(f"{directory / 'table.csv'} columns do not match {meta_path}")
    frame = raw.frame
    table = DataTable(
        specs,
        frame[[s.name for s in specs]].to_numpy(dtype=np.float64),
        frame["y_binary"].to_numpy(dtype=np.int64),
        frame["y_multi"].to_numpy(dtype=np.int64),
        tuple(meta["class_names"]),
    )
    is_train = (frame["split"] == "train").to_numpy()
    rows = np.arange(table.n_rows)
    indices = SplitIndices(_read_only(rows[is_train]), _read_only(rows[~is_train]),
                           int(meta["seed"]), float(meta["train_ratio"]))
    scaler = ScalerParams(_read_only(np.asarray(meta["scaler"]["min"], dtype=np.float64)),
                          _read_only(np.asarray(meta["scaler"]["max"], dtype=np.float64)))
    return PreparedData(
        table=table,
        split=indices,
        scaler=scaler,
        seed=int(meta["seed"]),
        source=meta.get("source", ""),
        rows_loaded=int(meta.get("rows_loaded", 0)),
        rows_complete=int(meta.get("rows_complete", 0)),
    )
