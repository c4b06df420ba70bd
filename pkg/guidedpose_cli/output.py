from __future__ import annotations

import json
import math
from dataclasses import asdict, is_dataclass
from typing import Any, Iterable, Tuple

import numpy as np

from guided_pose.tensor_io import format_float


def to_jsonable(value: Any) -> Any:
    """Convert CLI results to JSON-safe values; non-finite floats become ``null``."""
    if is_dataclass(value):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (tuple, list)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps_json(payload: Any, *, pretty: bool = False) -> str:
    if pretty:
        return json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n"
    return json.dumps(to_jsonable(payload), separators=(",", ":"), sort_keys=True) + "\n"


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def key_values(pairs: Iterable[Tuple[str, Any]]) -> str:
    """Machine-readable ``key=value`` lines."""
    return "".join(f"{key}={format_value(value)}\n" for key, value in pairs)
