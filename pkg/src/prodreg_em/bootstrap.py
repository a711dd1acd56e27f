"""Nonparametric percentile bootstrap for the regression coefficients."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .em import EmConfig, FitResult, fit
from .model import ModelSpec, Theta


class BootstrapError(RuntimeError):
    pass


@dataclass
class BootstrapResult:
    lower: np.ndarray
    upper: np.ndarray
    level: float
    n_boot: int
    n_used: int
    n_failed: int
    n_nonconverged: int
    estimates: np.ndarray = field(repr=False)
    warnings: list = field(default_factory=list)

    def intervals(self) -> list:
        return list(zip(self.lower.tolist(), self.upper.tolist()))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """PCG64 stream for one replicate, a pure function of (seed, replicate).

    ``SeedSequence`` hashes the pair, so streams are independent and do not
    depend on which other replicates ran or in what order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def resample_indices(seed: int, replicate: int, n: int) -> np.ndarray:
    return replicate_rng(seed, replicate).integers(0, n, size=n)


def nearest_rank(sorted_vals: np.ndarray, q: float) -> np.ndarray:
    """Nearest-rank percentile: element ceil(q * B) (1-based) of sorted values."""
    B = sorted_vals.shape[0]
    rank = min(max(math.ceil(q * B - 1e-9), 1), B)
    return sorted_vals[rank - 1]


def percentile_interval(estimates: np.ndarray, level: float):
    lo_q = (1.0 - level) / 2.0
    vals = np.sort(np.asarray(estimates, dtype=float), axis=0)
    return nearest_rank(vals, lo_q), nearest_rank(vals, 1.0 - lo_q)


def _one_replicate(args):
    spec, y, X, config, seed, r, theta0 = args
    idx = resample_indices(seed, r, y.size)
    try:
        res = fit(spec, y[idx], X[idx], config, theta0=theta0)
    except (np.linalg.LinAlgError, ValueError) as exc:
        return r, None, False, str(exc)
    return r, res.theta.beta, res.converged, None


def bootstrap_ci(spec: ModelSpec, y, X, config: EmConfig = EmConfig(), B: int = 1000,
                 level: float = 0.95, seed: int = 0, *, theta0: Theta | None = None,
                 threads: int = 1) -> BootstrapResult:
    """Percentile intervals for beta over B row-resampled refits.

    Replicates that raise or fail to converge are excluded and counted.
    ``theta0`` (typically the full-sample estimate) warm-starts every refit.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    config = EmConfig(config.method, config.tol, config.max_iter, config.grid, False)
    jobs = [(spec, y, X, config, seed, r, theta0) for r in range(B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one_replicate, jobs, chunksize=max(1, B // (4 * threads))))
    else:
        results = [_one_replicate(job) for job in jobs]
    results.sort(key=lambda t: t[0])
    betas, msgs = [], []
    failed = nonconv = 0
    for _, beta, converged, err in results:
        if beta is None:
            failed += 1
            if err not in msgs:
                msgs.append(err)
        elif not converged:
            nonconv += 1
        else:
            betas.append(beta)
    if not betas:
        raise BootstrapError("bootstrap failed: no replicate converged")
    if failed or nonconv:
        text = f"{failed} bootstrap replicates failed and {nonconv} did not converge"
        warnings.warn(text, RuntimeWarning, stacklevel=2)
        msgs.insert(0, text)
    est = np.array(betas)
    lower, upper = percentile_interval(est, level)
    return BootstrapResult(lower, upper, level, B, len(betas), failed, nonconv, est, msgs)


def fit_with_bootstrap(spec, y, X, config: EmConfig, B: int, level: float, seed: int,
                       threads: int = 1):
    """Point estimate plus bootstrap intervals warm-started at that estimate."""
    point: FitResult = fit(spec, y, X, config)
    boot = bootstrap_ci(spec, y, X, config, B, level, seed, theta0=point.theta, threads=threads)
    return point, boot
