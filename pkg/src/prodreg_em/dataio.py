"""Reading user data files: CSV with missing values, JSON documents."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

MISSING_TOKENS = {"", "NA"}


class DataFormatError(ValueError):
    pass


def read_data_csv(path, p: int | None = None):
    """Read a header-first CSV: column 1 is y, the rest are predictors in model order.

    Empty fields and the literal ``NA`` are missing and become NaN.
    Returns ``(y, X, header)``.
    """
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    width = len(header)
    if width < 2:
        raise DataFormatError(f"{path}: need a y column and at least one predictor")
    if p is not None and width != p + 1:
        raise DataFormatError(
            f"{path}: {width - 1} predictor columns but the model has p={p}")
    values = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataFormatError(f"{path}: line {i} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                values[i - 2, j] = np.nan
                continue
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}: line {i}, column {j + 1}: "
                                      f"not a number: {cell!r}") from None
    return values[:, 0].copy(), values[:, 1:].copy(), header


def write_data_csv(path, y, X, header=None) -> None:
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    header = header or ["y"] + [f"x{j}" for j in range(X.shape[1])]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for yi, xi in zip(y, X):
            writer.writerow(["NA" if np.isnan(v) else repr(float(v)) for v in (yi, *xi)])


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
