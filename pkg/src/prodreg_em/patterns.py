"""Missing-data pattern classification."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ModelSpec


class MDP(str, Enum):
    COMPLETE = "COMPLETE"
    MDP1 = "MDP1"  # y missing
    MDP2 = "MDP2"  # y observed, every product keeps an observed factor
    MDP3 = "MDP3"  # y observed, some product has both factors missing


@dataclass(frozen=True)
class CasePattern:
    r_y: bool
    r_x: tuple
    mdp: MDP


def classify(spec: ModelSpec, r_y: bool, r_x) -> MDP:
    r_x = [bool(v) for v in r_x]
    if len(r_x) != spec.p:
        raise ValueError(f"r_x has length {len(r_x)}, expected {spec.p}")
    if not r_y:
        return MDP.MDP1
    if any(not r_x[j] and not r_x[k] for j, k in spec.pairs):
        return MDP.MDP3
    if not all(r_x):
        return MDP.MDP2
    return MDP.COMPLETE


def case_pattern(spec: ModelSpec, r_y: bool, r_x) -> CasePattern:
    r_x = tuple(bool(v) for v in r_x)
    return CasePattern(bool(r_y), r_x, classify(spec, r_y, r_x))


def observedness(y, X):
    """Indicator arrays (r_y, r_x) for data with NaN marking missing values."""
    return ~np.isnan(np.asarray(y, dtype=float)), ~np.isnan(np.asarray(X, dtype=float))


def classify_rows(spec: ModelSpec, y, X) -> list:
    r_y, r_x = observedness(y, X)
    return [classify(spec, a, b) for a, b in zip(r_y, r_x)]
