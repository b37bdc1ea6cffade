import json
import math
from pathlib import Path
from typing import Any, Tuple

import numpy as np

from .logger import get_logger

logger = get_logger(__name__)


def positive_part(values: np.ndarray) -> np.ndarray:
    """
    Elementwise positive part x⁺ = max(x, 0).

    Args:
        values: Input array

    Returns:
        np.ndarray: Array of the same shape
    """
    return np.maximum(np.asarray(values, dtype=float), 0.0)


def negative_part(values: np.ndarray) -> np.ndarray:
    """
    Elementwise negative part x⁻ = max(-x, 0).

    Args:
        values: Input array

    Returns:
        np.ndarray: Array of the same shape
    """
    return np.maximum(-np.asarray(values, dtype=float), 0.0)


def jordan_split(increments: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split signed increments into two nonnegative parts with disjoint supports.

    Args:
        increments: Signed nodewise increments

    Returns:
        tuple: (positive part, negative part), with increments = pos - neg
    """
    return positive_part(increments), negative_part(increments)


def max_abs(values: Any) -> float:
    """
    Largest absolute entry, 0.0 for empty input.

    Args:
        values: Array-like of reals

    Returns:
        float: max |x|
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr)))


def scaled_tolerance(tol: float, *arrays: Any) -> float:
    """
    Absolute tolerance scaled by the magnitude of the data being compared.

    Args:
        tol: Relative tolerance
        arrays: Arrays whose magnitude sets the scale

    Returns:
        float: tol * max(1, largest |entry|)
    """
    scale = max([1.0] + [max_abs(a) for a in arrays])
    return tol * scale


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy scalars/arrays (nested in dicts, lists, tuples) to plain Python.

    Non-finite floats become strings so the output stays valid JSON.

    Args:
        obj: Object to convert

    Returns:
        JSON-serializable object
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not math.isfinite(value):
            return repr(value)
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, payload: Any) -> Path:
    """
    Write a JSON document with sorted keys so identical payloads give identical bytes.

    Args:
        path: Target file
        payload: Object to serialize (converted with to_jsonable)

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding='utf-8')
    logger.debug(f"Wrote {path}")
    return path
