"""Deterministic CSV output and file hashing."""
from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import numpy as np


def format_value(value) -> str:
    """Locale-free text for one CSV cell; floats use 12 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            return "0"
        return format(v, ".12g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, rows, columns=None) -> Path:
    """Write dict rows with a header; column order from ``columns`` or the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])
    return path


def read_csv(path):
    """Rows as dicts of strings (for tests and downstream tools)."""
    with Path(path).open(newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()
