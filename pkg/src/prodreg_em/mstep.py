"""Closed-form maximisers of the Q-function given summed expected statistics."""

from __future__ import annotations

import warnings

import numpy as np

from .estep import SumStats
from .gaussian import NumericalWarning
from .model import ModelSpec, Theta


class SingularDesignError(np.linalg.LinAlgError):
    pass


_COND_LIMIT = 1e13
SIGMA2_FLOOR = 1e-10


def update_beta(spec: ModelSpec, s: SumStats) -> np.ndarray:
    """Normal equations restricted to the free coefficients; fixed ones stay 0.0."""
    free = spec.free_index
    beta = np.zeros(spec.d)
    if free.size == 0:
        return beta
    A = s.ddt[np.ix_(free, free)]
    b = s.yd[free]
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise SingularDesignError("design moment matrix singular")
    beta[free] = np.linalg.solve(A, b)
    return beta


def update_sigma2(spec: ModelSpec, s: SumStats, beta_hat) -> float:
    beta_hat = np.asarray(beta_hat, dtype=float)
    val = (s.y2 - 2.0 * s.yd @ beta_hat + beta_hat @ s.ddt @ beta_hat) / s.n
    if not val > SIGMA2_FLOOR:
        warnings.warn(f"error variance {val:.3g} floored at {SIGMA2_FLOOR:g}",
                      NumericalWarning, stacklevel=2)
        return SIGMA2_FLOOR
    return float(val)


def update_mu(s: SumStats) -> np.ndarray:
    if not s.n > 0:
        raise ValueError("no cases accumulated")
    return s.x / s.n


def floor_eigenvalues(M: np.ndarray, rel: float = 1e-10) -> np.ndarray:
    """Symmetrise ``M`` and lift eigenvalues below ``rel * max(trace/p, 1)``."""
    M = (M + M.T) / 2
    p = M.shape[0]
    floor = rel * max(np.trace(M) / p, 1.0)
    vals, vecs = np.linalg.eigh(M)
    if vals[0] >= floor:
        return M
    warnings.warn("covariance estimate not positive definite; eigenvalues floored",
                  NumericalWarning, stacklevel=2)
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    return (out + out.T) / 2


def update_Sigma(s: SumStats, mu_hat) -> np.ndarray:
    mu_hat = np.asarray(mu_hat, dtype=float)
    if not s.n > 0:
        raise ValueError("no cases accumulated")
    return floor_eigenvalues(s.xxt / s.n - np.outer(mu_hat, mu_hat))


def m_step(spec: ModelSpec, s: SumStats) -> Theta:
    beta = update_beta(spec, s)
    mu = update_mu(s)
    return Theta(beta, update_sigma2(spec, s, beta), mu, update_Sigma(s, mu))
