import csv
import json
import os
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

MISSING = object()


def extract_value(data, key: str, default=MISSING):
    """Extract a value from nested dictionaries or lists using dot notation.

    Returns `default` when the path does not exist, or raises ``KeyError``
    if no default is given.
    """
    value = data
    try:
        for k in key.split('.'):
            if k.isdigit():
                value = value[int(k)]
            else:
                value = value[k]
    except (KeyError, TypeError, IndexError):
        if default is MISSING:
            raise KeyError(key)
        return default
    return value


def has_value(data, key: str) -> bool:
    try:
        extract_value(data, key)
        return True
    except KeyError:
        return False


def format_float(x) -> str:
    """Round-trippable decimal form with 17 significant digits."""
    return format(float(x), ".17g")


def format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return str(x)


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars and arrays (recursively) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_csv(path: str, header: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(row.get(col, "")) for col in header])


def write_json(path: str, data: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> Dict[str, Any]:
    with open(path) as fh:
        return json.load(fh)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    """Least-squares line ``y = slope * x + intercept`` with its coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def observed_rates(h: List[float], errors: List[float]) -> List[float]:
    """Rates ``log(e_{i-1}/e_i) / log(h_{i-1}/h_i)``; the first entry is nan."""
    rates = [float("nan")]
    for i in range(1, len(errors)):
        if errors[i] > 0 and errors[i - 1] > 0:
            rates.append(float(np.log(errors[i - 1] / errors[i]) / np.log(h[i - 1] / h[i])))
        else:
            rates.append(float("nan"))
    return rates
