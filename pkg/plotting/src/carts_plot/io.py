"""Readers for the documented experiment-output schemas. The plotting side
deliberately knows nothing about the emulator internals: it consumes CSV
files only.

Schemas:
  metrics.csv     round,t,nmse,cir_peak_error_taps
  trajectory.csv  round,t,x_est,y_est,x_true,y_true
  bars CSV        group,series,value
"""

from __future__ import annotations

import csv
import os


class SchemaError(ValueError):
    pass


def _read_rows(path, required):
    if not os.path.exists(path):
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(
                f"{path}: missing columns {missing}; found {header}"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_metric_column(path, column):
    rows = _read_rows(path, [column])
    try:
        return [float(r[column]) for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric value in {column!r}: {exc}")


def read_trajectory(path, round_index=None):
    rows = _read_rows(path, ["round", "t", "x_est", "y_est", "x_true", "y_true"])
    if round_index is not None:
        rows = [r for r in rows if int(r["round"]) == round_index]
        if not rows:
            raise SchemaError(f"{path}: no rows for round {round_index}")
    est = [(float(r["x_est"]), float(r["y_est"])) for r in rows]
    true = [(float(r["x_true"]), float(r["y_true"])) for r in rows]
    return est, true


def read_bars(path):
    rows = _read_rows(path, ["group", "series", "value"])
    out = {}
    for r in rows:
        try:
            value = float(r["value"])
        except ValueError:
            raise SchemaError(f"{path}: non-numeric bar value {r['value']!r}")
        out.setdefault(r["group"], {})[r["series"]] = value
    return out
