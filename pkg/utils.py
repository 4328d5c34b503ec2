"""
Utility functions for parsing, serialization and run bookkeeping.
"""

import os
import platform
from typing import Any, Dict, List, Tuple

import numpy as np

from exceptions import InputError

TOOLKIT_NAME = "flowlens"
TOOLKIT_VERSION = "1.0.0"

# Keys that hold wall-clock measurements; they never enter result.json.
TIMING_KEYS = frozenset({
    "train_wall_time",
    "predict_wall_time",
    "train_repeats",
    "predict_repeats",
})


def parse_kv_string(text: str) -> Dict[str, str]:
    """
    Parse comma-separated settings such as "n=20000,informative=3,noise=12".

    Whitespace around keys and values is stripped and empty items (a trailing
    comma) are skipped. Values stay strings; the caller validates them.

    Args:
        text: Settings string from --synthetic or --set

    Returns:
        Dictionary of keys to raw string values, in the order given

    Raises:
        InputError: On an item without '=' or with an empty or repeated key
    """
    pairs: Dict[str, str] = {}
    for item in (text or "").split(','):
        item = item.strip()
        if not item:
            continue
        if '=' not in item:
            raise InputError(f"expected key=value, got '{item}'")
        key, value = (part.strip() for part in item.split('=', 1))
        if not key:
            raise InputError(f"missing key before '=' in '{item}'")
        if key in pairs:
            raise InputError(f"'{key}' is set twice in '{text}'")
        pairs[key] = value
    return pairs


def parse_kv_lines(text: str) -> Dict[str, str]:
    """
    Parse a small config file made of "key = value" lines.

    Blank lines and everything after a '#' are ignored. Values may contain
    commas (lists are split by the caller).

    Args:
        text: File contents

    Returns:
        Dictionary of keys to raw string values
    """
    pairs = {}
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if not line or '=' not in line:
            continue
        key, value = line.split('=', 1)
        pairs[key.strip()] = value.strip()
    return pairs


def split_list(value: str) -> List[str]:
    """Split a comma-separated value, dropping empty items."""
    return [item.strip() for item in value.split(',') if item.strip()]


def environment_fingerprint() -> Dict[str, Any]:
    """Describe the machine a run executed on."""
    return {
        'cpu': platform.processor() or platform.machine() or 'unknown',
        'cores': os.cpu_count() or 1,
        'platform': platform.platform(),
        'python': platform.python_version(),
        'numpy': np.__version__,
    }


def split_timing_fields(doc: Any, path: str = "") -> Tuple[Any, Dict[str, Any]]:
    """
    Separate wall-clock fields from a JSON-ready document.

    Args:
        doc: Nested dicts/lists produced by model_dump(mode="json")
        path: JSON path prefix of doc

    Returns:
        (doc without timing keys, {json path: timing value})
    """
    timings: Dict[str, Any] = {}
    if isinstance(doc, dict):
        clean = {}
        for key, value in doc.items():
            child = f"{path}/{key}"
            if key in TIMING_KEYS:
                timings[child] = value
                continue
            clean[key], nested = split_timing_fields(value, child)
            timings.update(nested)
        return clean, timings
    if isinstance(doc, list):
        clean_list = []
        for index, value in enumerate(doc):
            item, nested = split_timing_fields(value, f"{path}/{index}")
            clean_list.append(item)
            timings.update(nested)
        return clean_list, timings
    return doc, timings
