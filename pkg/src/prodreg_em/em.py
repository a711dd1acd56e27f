"""EM driver: start values, E/M alternation and observed-data log-likelihood."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estep import CasePlan, GridConfig, Method, _grid_log_weights, _grid_nodes, mdp2_posterior
from .gaussian import NumericalWarning
from .model import ModelSpec, Theta, design_matrix
from .mstep import floor_eigenvalues, m_step
from .patterns import MDP


@dataclass(frozen=True)
class EmConfig:
    method: Method = Method.HYB
    tol: float = 1e-6
    max_iter: int = 500
    grid: GridConfig = GridConfig()
    track_loglik: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class FitResult:
    theta: Theta
    iterations: int
    converged: bool
    loglik_trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    last_change: float = math.inf


class ColumnNeverObserved(ValueError):
    pass


def _ols(spec: ModelSpec, y, X):
    D = design_matrix(spec, X)
    free = spec.free_index
    beta = np.zeros(spec.d)
    A = D[:, free].T @ D[:, free]
    beta[free] = np.linalg.solve(A, D[:, free].T @ y)
    resid = y - D @ beta
    return beta, float(resid @ resid / y.size)


def start_values(spec: ModelSpec, y, X) -> Theta:
    """Available-case moments for (mu, Sigma); complete-case OLS for (beta, sigma2).

    Falls back to beta = 0 and the observed variance of y when fewer than
    d + 1 complete rows exist.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if y.size == 0:
        raise ValueError("dataset is empty")
    r_x = ~np.isnan(X)
    r_y = ~np.isnan(y)
    never = [j for j in range(spec.p) if not r_x[:, j].any()]
    if never or not r_y.any():
        cols = (["y"] if not r_y.any() else []) + [f"x{j}" for j in never]
        raise ColumnNeverObserved(f"column never observed: {', '.join(cols)}")
    mu = np.nanmean(X, axis=0)
    p = spec.p
    S = np.empty((p, p))
    for j in range(p):
        for k in range(j, p):
            both = r_x[:, j] & r_x[:, k]
            if both.sum() < 2:
                S[j, k] = S[k, j] = (np.nanvar(X[:, j]) if j == k else 0.0)
                continue
            a, b = X[both, j], X[both, k]
            S[j, k] = S[k, j] = np.mean((a - a.mean()) * (b - b.mean()))
    S = np.where(np.isfinite(S), S, 0.0)
    np.fill_diagonal(S, np.where(np.diag(S) > 0, np.diag(S), 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        S = floor_eigenvalues(S, rel=1e-6)
    complete = r_y & r_x.all(axis=1)
    beta = np.zeros(spec.d)
    sigma2 = None
    if complete.sum() >= spec.d + 1:
        try:
            beta, sigma2 = _ols(spec, y[complete], X[complete])
        except np.linalg.LinAlgError:
            beta, sigma2 = np.zeros(spec.d), None
    if sigma2 is None or not sigma2 > 0:
        beta = np.zeros(spec.d)
        yo = y[r_y]
        sigma2 = float(yo.var()) if yo.size > 1 and yo.var() > 0 else 1.0
    return Theta(beta, sigma2, mu, S)


def _relative_change(old: Theta, new: Theta) -> float:
    a, b = old.flat(), new.flat()
    return float(np.max(np.abs(b - a) / (1.0 + np.abs(a))))


def _mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Row-wise log N(x; mean, cov) for (k, q) arrays; q = 0 gives 0."""
    q = cov.shape[0]
    if q == 0:
        return np.zeros(x.shape[0])
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, (x - mean).T).T
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (white ** 2).sum(axis=1) - 0.5 * (q * math.log(2 * math.pi) + logdet)


def _norm_logpdf(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(2 * math.pi * var)


def observed_loglik(spec: ModelSpec, theta: Theta, y, X, grid: GridConfig = GridConfig(),
                    plan: CasePlan | None = None) -> float:
    """Observed-data log-likelihood (exact except for MDP3 cases, which use the grid)."""
    plan = plan or CasePlan(spec, y, X)
    mu, S, beta, s2 = theta.mu, theta.Sigma, theta.beta, theta.sigma2_eps
    parts = []
    if plan.complete_rows.size:
        rows = plan.complete_rows
        yc, Xc = plan.y[rows], plan.X[rows]
        fit = design_matrix(spec, Xc) @ beta
        parts.append(_norm_logpdf(yc, fit, s2) + _mvn_logpdf(Xc, mu, S))
    for group in plan.groups:
        rows, obs, mis = group.rows, group.obs, group.mis
        yg, Xg = plan.y[rows], plan.X[rows]
        x_o = Xg[:, obs]
        marg = _mvn_logpdf(x_o, mu[obs], S[np.ix_(obs, obs)])
        if group.mdp is MDP.MDP1:
            parts.append(marg)
        elif group.mdp is MDP.MDP2:
            _, _, cond, alpha0, alpha1 = mdp2_posterior(spec, theta, yg, Xg, obs, mis)
            pred = (yg - alpha0) + (alpha1 * cond.mean).sum(axis=1)
            var = s2 + ((alpha1 @ cond.cov) * alpha1).sum(axis=1)
            parts.append(marg + _norm_logpdf(yg, pred, var))
        else:
            g, D = _grid_nodes(spec, theta, Xg, obs, mis, grid)
            logw = _grid_log_weights(theta, yg, D, g) + g.log_cell
            top = logw.max(axis=1)
            lse = top + np.log(np.exp(logw - top[:, None]).sum(axis=1))
            parts.append(marg + lse)
    return math.fsum(np.concatenate(parts).tolist())


def fit(spec: ModelSpec, y, X, config: EmConfig = EmConfig(), theta0: Theta | None = None,
        plan: CasePlan | None = None) -> FitResult:
    """Run EM from ``theta0`` (default: ``start_values``) until the largest
    relative parameter change ``|d theta| / (1 + |theta|)`` is at most ``tol``.
    """
    plan = plan or CasePlan(spec, y, X)
    theta = theta0.copy() if theta0 is not None else start_values(spec, plan.y, plan.X)
    trace = []
    msgs = []
    converged = False
    change = math.inf
    it = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NumericalWarning)
        if config.track_loglik:
            trace.append(observed_loglik(spec, theta, plan.y, plan.X, config.grid, plan))
        for it in range(1, config.max_iter + 1):
            try:
                stats = plan.accumulate(theta, config.method, config.grid)
                new = m_step(spec, stats)
            except np.linalg.LinAlgError as exc:
                raise type(exc)(f"iteration {it}: {exc}") from exc
            change = _relative_change(theta, new)
            theta = new
            if config.track_loglik:
                trace.append(observed_loglik(spec, theta, plan.y, plan.X, config.grid, plan))
            if change <= config.tol:
                converged = True
                break
        for w in caught:
            text = str(w.message)
            if text not in msgs:
                msgs.append(text)
    return FitResult(theta, it, converged, trace, msgs, change)
