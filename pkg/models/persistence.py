"""
Versioned JSON documents for trained models.

Arrays are written as {"__ndarray__": {"dtype", "shape", "data"}}; json writes
floats with repr, which round-trips float64 exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from exceptions import DataIngestionError, InputError
from .base import ModelKind, TrainConfig, TrainedModel, TrainingMeta
from .training import REGISTRY

logger = logging.getLogger(__name__)

MODEL_FORMAT = "flowlens-model"
MODEL_FORMAT_VERSION = 1

_ARRAY_TAG = "__ndarray__"


def _encode(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {_ARRAY_TAG: {"dtype": str(value.dtype), "shape": list(value.shape),
                             "data": value.ravel().tolist()}}
    if isinstance(value, dict):
        return {key: _encode(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(item) for item in value]
    return value


def _decode(value: Any) -> Any:
    if isinstance(value, dict):
        if set(value) == {_ARRAY_TAG}:
            spec = value[_ARRAY_TAG]
            return np.asarray(spec["data"], dtype=spec["dtype"]).reshape(spec["shape"])
        return {key: _decode(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_decode(item) for item in value]
    return value


def model_to_document(model: TrainedModel) -> Dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "class_count": model.class_count,
        "n_features": model.n_features,
        "feature_names": list(model.feature_names) if model.feature_names is not None else None,
        "params": _encode(model.estimator.get_params()),
        "meta": model.meta.model_dump(mode="json"),
        "config": model.config.model_dump(mode="json"),
    }


def model_from_document(doc: Dict[str, Any]) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise InputError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise InputError(f"unsupported model format version {doc.get('version')!r}")
    kind = ModelKind(doc["kind"])
    config = TrainConfig.model_validate(doc["config"])
    estimator = REGISTRY[kind](config, int(doc["class_count"]))
    estimator.set_params(_decode(doc["params"]))
    names = doc.get("feature_names")
    return TrainedModel(
        kind=kind,
        estimator=estimator,
        class_count=int(doc["class_count"]),
        n_features=int(doc["n_features"]),
        meta=TrainingMeta.model_validate(doc["meta"]),
        config=config,
        feature_names=tuple(names) if names is not None else None,
    )


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(model_to_document(model), sort_keys=True, indent=2, allow_nan=False) + "\n"
    path.write_text(text, encoding="utf-8")
    logger.info("saved %s model to %s", model.kind.value, path)
    return path


def load_model(path) -> TrainedModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataIngestionError(f"cannot read model file {path}: {exc}") from exc
    try:
        return model_from_document(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed model file {path}: {exc}") from exc
