"""
CSV and JSON writers for run outputs.

CSV files are comma separated with one header row. Floats are written with
%.17g so a file round-trips bit for bit, and every data row ends with the
config hash and units convention of the run that produced it. In gnuplot::

    set datafile separator comma
    plot 'photon_number.csv' using 1:3 with lines title columnheader
"""

import csv
import json
import math
import os
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from srmaser.logger_config import get_logger

logger = get_logger(__name__)

STAMP_COLUMNS = ["config_hash", "units"]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        return "%.17g" % number
    return str(value)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              config_hash: Optional[str] = None, units: Optional[str] = None) -> str:
    """
    Write rows under a header; stamp columns are appended when a hash is given.

    Returns:
        The path written.
    """
    header = list(columns)
    stamp: List[str] = []
    if config_hash is not None:
        header += STAMP_COLUMNS
        stamp = [config_hash, units or "angular"]
    ensure_dir(os.path.dirname(path) or ".")
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row] + stamp)
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"re": value.real.tolist(), "im": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, np.generic):
        return _json_default(value.item()) if isinstance(value, np.complexfloating) else value.item()
    if is_dataclass(value):
        return asdict(value)
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _finite(value: Any) -> Any:
    """Replace non-finite floats, which JSON cannot hold, by strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def write_json(path: str, document: Any) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    normalized = json.loads(json.dumps(document, default=_json_default))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_finite(normalized), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    return path
