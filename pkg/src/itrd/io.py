"""CSV feature files and JSON metric reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ItrdError


class InputError(ItrdError, ValueError):
    """A feature file is missing, malformed or inconsistent."""


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_features(path) -> np.ndarray:
    """Read an n x d CSV of reals. A first row containing any non-numeric token is a header."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    if rows and not all(_is_number(cell.strip()) for cell in rows[0]):
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                value = float(cell.strip())
            except ValueError:
                raise InputError(f"{path}: row {line}, column {j + 1}: cannot parse {cell!r}") from None
            if not math.isfinite(value):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value {cell!r}")
            data[i, j] = value
    return data


def write_features(path, z, header=None) -> None:
    z = np.asarray(z, dtype=np.float64)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in z:
            writer.writerow([f"{x:.17g}" for x in row])


def dump_report(report: dict) -> str:
    """Serialize a metrics report as key-sorted JSON (byte-stable for equal input)."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
