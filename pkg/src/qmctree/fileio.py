"""Operator files: JSON with explicit [re, im] entries, row-major,
big-endian multi-index.  Floats round-trip bit-exactly (repr serialization).
"""

from __future__ import annotations

import json

import numpy as np

from .layout import SubsystemLayout
from .states import DensityOperator


class FileFormatError(ValueError):
    pass


def _require(cond: bool, message: str):
    if not cond:
        raise FileFormatError(message)


def operator_to_dict(layout: SubsystemLayout, matrix: np.ndarray) -> dict:
    matrix = np.asarray(matrix, dtype=complex)
    _require(
        matrix.shape == (layout.dim, layout.dim),
        f"matrix shape {matrix.shape} does not match layout dim {layout.dim}",
    )
    return {
        "labels": list(layout.labels),
        "dims": list(layout.dims),
        "matrix": [
            [[float(v.real), float(v.imag)] for v in row] for row in matrix
        ],
    }


def operator_from_dict(data: dict) -> tuple[SubsystemLayout, np.ndarray]:
    for key in ("labels", "dims", "matrix"):
        _require(key in data, f"missing field {key!r}")
    try:
        layout = SubsystemLayout(tuple(data["labels"]), tuple(data["dims"]))
    except (TypeError, ValueError) as err:
        raise FileFormatError(f"bad layout: {err}") from err
    rows = data["matrix"]
    _require(isinstance(rows, list) and len(rows) == layout.dim,
             f"matrix must have {layout.dim} rows")
    matrix = np.empty((layout.dim, layout.dim), dtype=complex)
    for i, row in enumerate(rows):
        _require(isinstance(row, list) and len(row) == layout.dim,
                 f"row {i} must have {layout.dim} entries")
        for j, entry in enumerate(row):
            _require(
                isinstance(entry, list) and len(entry) == 2
                and all(isinstance(x, (int, float)) for x in entry),
                f"entry ({i}, {j}) must be a [re, im] pair",
            )
            matrix[i, j] = complex(entry[0], entry[1])
    return layout, matrix


def write_operator(path, layout: SubsystemLayout, matrix: np.ndarray):
    with open(path, "w") as fh:
        json.dump(operator_to_dict(layout, matrix), fh)
        fh.write("\n")


def read_operator(path) -> tuple[SubsystemLayout, np.ndarray]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise FileFormatError(f"{path}: invalid JSON at line {err.lineno}") from err
    except OSError as err:
        raise FileFormatError(f"{path}: {err}") from err
    _require(isinstance(data, dict), f"{path}: top level must be an object")
    try:
        return operator_from_dict(data)
    except FileFormatError as err:
        raise FileFormatError(f"{path}: {err}") from err


def write_density(path, state: DensityOperator):
    write_operator(path, state.layout, state.matrix)


def read_density(path) -> DensityOperator:
    layout, matrix = read_operator(path)
    try:
        return DensityOperator(layout, matrix)
    except ValueError as err:
        raise FileFormatError(f"{path}: not a density operator: {err}") from err
