"""Midpoint-rule cost of integrating f(x) = sum_j 12 x_j^2 over [0, 1]^p.

The integrand is a sum of identical one-dimensional terms, so the tensor
midpoint sum with ``n`` points per axis equals ``p`` times the 1-D midpoint
sum (each term integrates to 1 along the other axes). That gives the error
for ``n^p`` nodes at O(n) cost. Sums are taken in exact rational arithmetic
so the tolerance comparison at the boundary is not decided by rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


def midpoint_sum_1d(n: int) -> Fraction:
    """Midpoint rule for 12 x^2 on [0, 1] with n cells, exactly."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = sum(Fraction(12 * (2 * i + 1) ** 2, 4 * n * n) for i in range(n))
    return total / n


def midpoint_error(p: int, n: int) -> Fraction:
    """|tensor midpoint sum - 4p| with n points per axis."""
    return abs(p * midpoint_sum_1d(n) - 4 * p)


def min_points_per_axis(p: int, tol) -> int:
    """Smallest n whose midpoint error is within ``tol`` (error <= tol)."""
    tol = Fraction(str(tol)) if not isinstance(tol, Fraction) else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    hi = 1
    while midpoint_error(p, hi) > tol:
        hi *= 2
    lo = hi // 2 + 1 if hi > 1 else 1
    while lo < hi:
        mid = (lo + hi) // 2
        if midpoint_error(p, mid) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


@dataclass
class ScalingRow:
    p: int
    per_axis: int
    total_points: int
    error: float


def scaling_table(max_dim: int, tol) -> list:
    rows = []
    for p in range(1, max_dim + 1):
        n = min_points_per_axis(p, tol)
        rows.append(ScalingRow(p, n, n ** p, float(midpoint_error(p, n))))
    return rows
