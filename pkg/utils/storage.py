# utils/storage.py
"""
Result persistence: JSON summaries and pandas-backed CSV tables.
"""

import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Union

import pandas as pd


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def save_json(data, filename: Union[str, Path]) -> Path:
    """
    Save a Python dictionary or list as a JSON file.
    Automatically creates parent directories if needed; non-finite floats become null.
    """
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_safe(data), f, indent=4, ensure_ascii=False)
    return path


def save_csv(rows: Union[pd.DataFrame, Iterable[dict]], filename: Union[str, Path],
             columns: Optional[List[str]] = None) -> Path:
    """Write rows (or a DataFrame) as CSV with a header, full float precision."""
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def load_csv(filename: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(filename)
