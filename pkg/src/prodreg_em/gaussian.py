"""Multivariate Gaussian containers, conditioning and product moments.

The EM E-steps reduce to moments of (possibly degenerate) Gaussian
vectors. ``product_moment`` is the general-degree reference kernel; the
vectorised ``fourth_moment`` evaluates the degree-4 closed form for a
batch of distributions and is what the E-step actually calls.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np


class SingularCovarianceError(np.linalg.LinAlgError):
    """Raised when a covariance block that must be inverted is singular."""


class NumericalWarning(UserWarning):
    """Emitted when a numerical guard (jitter, floor) modifies a value."""


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"mean of length {mean.size} incompatible with cov of shape {cov.shape}"
            )
        scale = max(float(np.max(np.abs(cov))), 1.0) if cov.size else 1.0
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple

    def __post_init__(self):
        exps = tuple(int(a) for a in self.exponents)
        if any(a < 0 for a in exps):
            raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "exponents", exps)

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def __len__(self):
        return len(self.exponents)


def _as_index(a) -> MultiIndex:
    return a if isinstance(a, MultiIndex) else MultiIndex(tuple(a))


def pd_guard(cov: np.ndarray, what: str = "covariance") -> np.ndarray:
    """Return ``cov`` or a diagonally jittered copy if it is near-singular.

    Jitter of ``1e-8 * trace / p`` is added when the smallest eigenvalue
    drops below ``1e-10`` times the largest.
    """
    cov = np.asarray(cov, dtype=float)
    p = cov.shape[0]
    if p == 0:
        return cov
    eig = np.linalg.eigvalsh(cov)
    if eig[0] >= 1e-10 * max(eig[-1], 0.0) and eig[-1] > 0:
        return cov
    jitter = 1e-8 * max(np.trace(cov) / p, 1.0)
    warnings.warn(f"{what} near-singular; added diagonal jitter {jitter:.3g}",
                  NumericalWarning, stacklevel=2)
    return cov + jitter * np.eye(p)


def condition(g: GaussianParams, obs_idx: Sequence[int], obs_vals, *,
              guard: bool = False) -> GaussianParams:
    """Distribution of the unobserved coordinates given observed values.

    With ``guard=True`` a near-singular observed block is jittered (with a
    ``NumericalWarning``) instead of raising ``SingularCovarianceError``.
    """
    obs_idx = [int(i) for i in obs_idx]
    obs_vals = np.atleast_1d(np.asarray(obs_vals, dtype=float))
    p = g.dim
    if len(set(obs_idx)) != len(obs_idx):
        raise ValueError("observed indices must be distinct")
    if any(i < 0 or i >= p for i in obs_idx):
        raise ValueError(f"observed index out of range for dimension {p}")
    if obs_vals.size != len(obs_idx):
        raise ValueError("obs_vals length does not match obs_idx")
    if not obs_idx:
        return g
    mis_idx = [i for i in range(p) if i not in set(obs_idx)]
    s_oo = g.cov[np.ix_(obs_idx, obs_idx)]
    if guard:
        s_oo = pd_guard(s_oo, "observed block")
    else:
        eig = np.linalg.eigvalsh(s_oo)
        if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
            raise SingularCovarianceError("observed block singular")
    s_mo = g.cov[np.ix_(mis_idx, obs_idx)]
    gain = np.linalg.solve(s_oo, s_mo.T).T
    mean = g.mean[mis_idx] + gain @ (obs_vals - g.mean[obs_idx])
    cov = g.cov[np.ix_(mis_idx, mis_idx)] - gain @ s_mo.T
    return GaussianParams(mean, (cov + cov.T) / 2)


def product_moment(g: GaussianParams, a) -> float:
    """E[prod_i X_i^a_i] for X ~ N(mean, cov), any degree.

    Uses the recurrence obtained by differentiating the moment generating
    function once in coordinate j:

        E[X_j X^b] = mu_j E[X^b] + sum_k b_k S_jk E[X^(b - e_k)]

    memoised over sub-indices for this call only.
    """
    a = _as_index(a)
    if len(a) != g.dim:
        raise ValueError(f"multi-index length {len(a)} != dimension {g.dim}")
    mu, cov = g.mean, g.cov

    @lru_cache(maxsize=None)
    def moment(b):
        j = next((i for i, e in enumerate(b) if e), None)
        if j is None:
            return 1.0
        rest = list(b)
        rest[j] -= 1
        total = mu[j] * moment(tuple(rest))
        for k, e in enumerate(rest):
            if e:
                sub = list(rest)
                sub[k] -= 1
                total += e * cov[j, k] * moment(tuple(sub))
        return total

    return float(moment(a.exponents))


def _pair_partitions(items):
    if not items:
        yield []
        return
    first = items[0]
    for i in range(1, len(items)):
        rest = items[1:i] + items[i + 1:]
        for tail in _pair_partitions(rest):
            yield [(first, items[i])] + tail


def isserlis_oracle(cov, a, mean=None) -> float:
    """Central Gaussian moment by brute-force pair-partition enumeration.

    Independent check for ``product_moment``; zero mean only, degree <= 8.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    a = _as_index(a)
    if mean is not None and np.any(np.asarray(mean) != 0):
        raise ValueError("isserlis_oracle supports zero-mean distributions only")
    if a.degree > 8:
        raise ValueError("isserlis_oracle is limited to degree <= 8")
    if len(a) != cov.shape[0]:
        raise ValueError("multi-index length does not match covariance")
    if a.degree % 2:
        return 0.0
    items = [i for i, e in enumerate(a.exponents) for _ in range(e)]
    total = 0.0
    for partition in _pair_partitions(items):
        term = 1.0
        for i, j in partition:
            term *= cov[i, j]
        total += term
    return total


def mc_moment_oracle(g: GaussianParams, a, n_samples: int, seed: int,
                     return_stderr: bool = False):
    """Sample-average estimate of a product moment (deterministic per seed)."""
    a = _as_index(a)
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    if a.degree == 0:
        return (1.0, 0.0) if return_stderr else 1.0
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(g.mean, g.cov, size=n_samples, method="eigh")
    vals = np.prod(draws ** np.asarray(a.exponents), axis=1)
    est = float(vals.mean())
    if return_stderr:
        return est, float(vals.std(ddof=1) / np.sqrt(n_samples))
    return est


def fourth_moment(mean: np.ndarray, cov: np.ndarray, i, j, k, l):
    """E[Z_i Z_j Z_k Z_l] for batched Gaussians, broadcast over index arrays.

    ``mean`` is (..., q) and ``cov`` (..., q, q); degenerate (PSD) covariances
    are fine, which is how constants and observed coordinates are carried.
    """
    mi, mj, mk, ml = mean[..., i], mean[..., j], mean[..., k], mean[..., l]
    sij, sik, sil = cov[..., i, j], cov[..., i, k], cov[..., i, l]
    sjk, sjl, skl = cov[..., j, k], cov[..., j, l], cov[..., k, l]
    return (mi * mj * mk * ml
            + mi * mj * skl + mi * mk * sjl + mi * ml * sjk
            + mj * mk * sil + mj * ml * sik + mk * ml * sij
            + sij * skl + sik * sjl + sil * sjk)


def all_multi_indices(p: int, max_degree: int):
    """Every exponent tuple of length p with total degree <= max_degree."""
    for exps in itertools.product(range(max_degree + 1), repeat=p):
        if sum(exps) <= max_degree:
            yield exps
