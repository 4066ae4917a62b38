"""Strict readers for the harness's delimited artifacts.

Each schema is a fixed header plus all-numeric rows with '.' decimals and LF
endings.  Anything else fails loudly: plots must never silently render from a
malformed file.
"""

from __future__ import annotations

import os

import numpy as np


class SchemaError(ValueError):
    pass


class MissingFile(FileNotFoundError):
    pass


SCHEMAS = {
    "tau_samples": ["traj_id", "tau", "censored", "blowup"],
    "survival": ["t", "p_hat", "ci_lo", "ci_hi"],
    "staged": ["k", "p_uncoupled", "ci_lo", "ci_hi", "F_k"],
    "lyapunov": ["r", "f", "fprime"],
}


def read_table(path, schema: str) -> dict:
    """Parse a CSV against a named schema; returns a column-name -> array dict."""
    columns = SCHEMAS.get(schema)
    if columns is None:
        raise ValueError(f"unknown schema {schema!r}")
    if not os.path.exists(path):
        raise MissingFile(f"input file not found: {path}")
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    if header != columns:
        raise SchemaError(
            f"{path}: header {header} does not match schema {schema!r} {columns}")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, "
                              f"got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: non-numeric field") from exc
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(columns)}
