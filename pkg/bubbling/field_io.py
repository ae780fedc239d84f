"""
Field I/O Module

This module handles on-disk artifacts: binary field dumps, JSON reports and
sidecars, and CSV tables.

A field dump is a 16-byte header (magic b"PFLD", little-endian u32 n, u32
reserved, 4 zero padding bytes) followed by n*n little-endian float64 values
in row-major order.
"""

import csv
import json
import logging
import math
import os
import struct
from typing import Any, Dict, List, Sequence

import numpy as np

from .errors import ConfigError
from .torus_spectral import PeriodicField, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"PFLD"
HEADER = struct.Struct("<4sII4x")


def _ensure_parent(path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)


def dump_field(f: PeriodicField, path: str) -> None:
    """
    Write a field dump.

    Args:
        f: Field to write
        path: Output file path; parent directories are created
    """
    _ensure_parent(path)
    with open(path, "wb") as out:
        out.write(HEADER.pack(MAGIC, f.grid.n, 0))
        out.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    logger.debug("wrote field n=%d to %s", f.grid.n, path)


def load_field(path: str) -> PeriodicField:
    """
    Read a field dump written by dump_field.

    Raises:
        ConfigError: If the file is missing, truncated, or not a field dump
    """
    if not os.path.exists(path):
        raise ConfigError(f"field dump not found: {path}")
    with open(path, "rb") as src:
        header = src.read(HEADER.size)
        if len(header) != HEADER.size:
            raise ConfigError(f"truncated field dump header: {path}")
        magic, n, _ = HEADER.unpack(header)
        if magic != MAGIC:
            raise ConfigError(f"not a field dump (bad magic): {path}")
        payload = src.read()
    if len(payload) != 8 * n * n:
        raise ConfigError(f"field dump {path} holds {len(payload)} bytes, expected {8 * n * n}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n)
    return PeriodicField(grid=make_grid(n), values=values)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(data: Dict[str, Any], path: str) -> None:
    """Write a deterministic JSON report (sorted keys, fixed indentation)."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(rows: Sequence[Dict[str, Any]], columns: List[str], path: str) -> None:
    """Write rows to a CSV table; missing cells are left empty."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in to_jsonable(row).items()})
