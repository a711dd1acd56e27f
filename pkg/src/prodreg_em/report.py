"""Results CSV I/O and marginal-mean summaries."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .simulation import RESULT_COLUMNS

GROUPABLE = ("n", "p", "phi_mis", "phi_mdp3", "seed", "rep", "coef", "order", "method")
SUMMARY_METRICS = (("deviation", "bias"), ("square_error", "mse"),
                   ("covered", "coverage"), ("seconds", "seconds"))
_INT_COLS = {"n", "p", "seed", "rep", "coef", "order", "covered", "converged"}
_STR_COLS = {"method"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(path, rows, append: bool = False) -> None:
    path = Path(path)
    new_file = not (append and path.exists() and path.stat().st_size > 0)
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])


def _parse(col: str, text: str):
    if col in _STR_COLS:
        return text
    if col in _INT_COLS:
        return int(text)
    return float(text)


def read_results(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"results file lacks columns: {', '.join(missing)}")
        return [{c: _parse(c, row[c]) for c in RESULT_COLUMNS} for row in reader]


def recompute_metrics(row: dict) -> dict:
    """Deviation, square error and coverage from persisted estimate, truth and CI."""
    dev = row["estimate"] - row["true"]
    lo, hi = row["ci_low"], row["ci_high"]
    covered = int(lo <= row["true"] <= hi) if not math.isnan(lo) else 0
    return {"deviation": dev, "square_error": dev * dev, "covered": covered}


def _mean_ci(values: np.ndarray):
    k = values.size
    mean = float(np.mean(values))
    if k < 2:
        return mean, mean, mean
    half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(k)
    return mean, mean - half, mean + half


def summarize(rows, by) -> list:
    """Group by ``by`` fields plus method; mean and normal 95% interval per metric.

    Rows flagged non-converged (or with NaN estimates) are left out.
    """
    by = list(by)
    unknown = [f for f in by if f not in GROUPABLE]
    if unknown:
        raise KeyError(f"unknown field(s): {', '.join(unknown)}")
    keys = by + (["method"] if "method" not in by else [])
    groups: OrderedDict = OrderedDict()
    for row in rows:
        if not row["converged"] or math.isnan(row["estimate"]):
            continue
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key in sorted(groups):
        members = groups[key]
        rec = dict(zip(keys, key))
        rec["count"] = len(members)
        for col, name in SUMMARY_METRICS:
            mean, lo, hi = _mean_ci(np.array([m[col] for m in members], dtype=float))
            rec[name] = mean
            rec[f"{name}_lo"] = lo
            rec[f"{name}_hi"] = hi
        out.append(rec)
    return out


def write_summary(path, summary) -> None:
    if not summary:
        Path(path).write_text("")
        return
    cols = list(summary[0])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in summary:
            writer.writerow([_fmt(rec[c]) for c in cols])
