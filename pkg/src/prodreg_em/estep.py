"""Conditional expectations of the complete-data sufficient statistics.

Every design entry ``d_i(x)`` is a product ``z_a z_b`` of two coordinates of
``z = (1, x)``, so ``E[d d^T | .]`` is a table of fourth moments of ``z`` and
``E[d | .]`` is its first row. For the analytic routes the conditional law of
``z`` is a degenerate Gaussian: the constant and observed coordinates carry
zero variance, the missing block carries the conditional (MDP1) or posterior
(MDP2) covariance. The quadrature route evaluates the same statistics as
weighted averages over a tensor midpoint grid.

The five containers (``e_y2``, ``e_yd``, ``e_ddt``, ``e_x``, ``e_xxt``) hold
every block of the sufficient-statistic vector: ``e_yd`` has ``Y``, ``Y X_j``
and ``Y X_j X_k``; ``e_ddt`` has all X products up to degree four.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .gaussian import fourth_moment, pd_guard
from .model import ModelSpec, Theta, design_matrix
from .patterns import MDP, classify

_CHUNK = 128


class Method(str, Enum):
    HYB = "HYB"
    NI = "NI"


@dataclass(frozen=True)
class GridConfig:
    target_points: int = 1000
    half_width_sd: float = 5.0

    def __post_init__(self):
        if int(self.target_points) < 1:
            raise ValueError("target_points must be >= 1")
        if not self.half_width_sd > 0:
            raise ValueError("half_width_sd must be positive")

    def points_per_axis(self, m: int) -> int:
        """Smallest n with n**m >= target_points."""
        if m < 1:
            raise ValueError("grid needs at least one missing coordinate")
        n = max(1, math.floor(self.target_points ** (1.0 / m)) - 1)
        while n ** m < self.target_points:
            n += 1
        return n


@dataclass
class ExpectedStats:
    e_y2: float
    e_yd: np.ndarray
    e_ddt: np.ndarray
    e_x: np.ndarray
    e_xxt: np.ndarray


@dataclass
class SumStats:
    n: float
    y2: float
    yd: np.ndarray
    ddt: np.ndarray
    x: np.ndarray
    xxt: np.ndarray

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "SumStats":
        d, p = spec.d, spec.p
        return cls(0.0, 0.0, np.zeros(d), np.zeros((d, d)), np.zeros(p), np.zeros((p, p)))

    @classmethod
    def from_cases(cls, cases) -> "SumStats":
        cases = list(cases)
        if not cases:
            raise ValueError("no cases to sum")
        batch = _Batch.stack(cases)
        return batch.total()

    def __add__(self, other: "SumStats") -> "SumStats":
        return SumStats(self.n + other.n, self.y2 + other.y2, self.yd + other.yd,
                        self.ddt + other.ddt, self.x + other.x, self.xxt + other.xxt)


@dataclass
class _Batch:
    """Per-case statistics stacked along axis 0."""

    y2: np.ndarray
    yd: np.ndarray
    ddt: np.ndarray
    x: np.ndarray
    xxt: np.ndarray

    def __len__(self):
        return self.y2.shape[0]

    def case(self, i: int) -> ExpectedStats:
        return ExpectedStats(float(self.y2[i]), self.yd[i], self.ddt[i], self.x[i], self.xxt[i])

    @classmethod
    def stack(cls, cases) -> "_Batch":
        return cls(np.array([c.e_y2 for c in cases], dtype=float),
                   np.stack([c.e_yd for c in cases]), np.stack([c.e_ddt for c in cases]),
                   np.stack([c.e_x for c in cases]), np.stack([c.e_xxt for c in cases]))

    @classmethod
    def concat(cls, batches) -> "_Batch":
        return cls(*(np.concatenate([getattr(b, f) for b in batches])
                     for f in ("y2", "yd", "ddt", "x", "xxt")))

    def total(self) -> SumStats:
        # math.fsum is exactly rounded, so the result does not depend on case order
        k = len(self)
        d, p = self.yd.shape[1], self.x.shape[1]
        flat = np.concatenate([self.y2[:, None], self.yd, self.ddt.reshape(k, -1),
                               self.x, self.xxt.reshape(k, -1)], axis=1)
        sums = np.array([math.fsum(col) for col in flat.T.tolist()])
        cut = np.cumsum([1, d, d * d, p])
        y2, yd, ddt, x, xxt = np.split(sums, cut)
        return SumStats(float(k), float(y2[0]), yd, ddt.reshape(d, d), x, xxt.reshape(p, p))


@lru_cache(maxsize=64)
def _quad_layout(spec: ModelSpec):
    """Unique sorted z-index quadruples behind E[d d^T] and their (d, d) map."""
    factors = spec.factor_index
    d = spec.d
    quads: dict = {}
    pos = np.empty((d, d), dtype=int)
    for a in range(d):
        for b in range(a, d):
            key = tuple(sorted((*factors[a], *factors[b])))
            pos[a, b] = pos[b, a] = quads.setdefault(key, len(quads))
    idx = np.array(list(quads), dtype=int).T
    return idx, pos


def design_moments(spec: ModelSpec, zmean: np.ndarray, zcov: np.ndarray):
    """E[d] and E[d d^T] for batched Gaussians over z = (1, x)."""
    (i, j, k, l), pos = _quad_layout(spec)
    vals = fourth_moment(zmean, zcov, i, j, k, l)
    ddt = vals[:, pos]
    return ddt[:, 0, :].copy(), ddt


def _x_blocks(spec: ModelSpec, ed: np.ndarray, eddt: np.ndarray):
    sl = slice(1, spec.p + 1)
    return ed[:, sl].copy(), eddt[:, sl, sl].copy()


def _beta_s(spec: ModelSpec, beta: np.ndarray) -> np.ndarray:
    """Symmetric (p, p) matrix of product coefficients, zero diagonal."""
    B = np.zeros((spec.p, spec.p))
    for i, (j, k) in enumerate(spec.pairs):
        B[j, k] = B[k, j] = beta[1 + spec.p + i]
    return B


def _rowdot(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise A @ v with an elementwise reduction (position-independent)."""
    return (A * v).sum(axis=-1)


@dataclass
class _Conditional:
    mean: np.ndarray  # (k, m)
    cov: np.ndarray   # (m, m), shared by the group


def _condition_group(theta: Theta, obs: np.ndarray, mis: np.ndarray,
                     x_obs: np.ndarray) -> _Conditional:
    mu, S = theta.mu, theta.Sigma
    s_mm = S[np.ix_(mis, mis)]
    if obs.size == 0:
        return _Conditional(np.broadcast_to(mu[mis], (x_obs.shape[0], mis.size)).copy(), s_mm)
    s_oo = pd_guard(S[np.ix_(obs, obs)], "observed block")
    s_mo = S[np.ix_(mis, obs)]
    gain = np.linalg.solve(s_oo, s_mo.T).T
    cov = s_mm - gain @ s_mo.T
    cov = (cov + cov.T) / 2
    mean = mu[mis] + _rowdot((x_obs - mu[obs])[:, None, :], gain[None, :, :])
    return _Conditional(mean, cov)


def _z_params(spec: ModelSpec, X: np.ndarray, mis: np.ndarray, mean_m: np.ndarray,
              cov_m: np.ndarray):
    k, p = X.shape
    zmean = np.empty((k, p + 1))
    zmean[:, 0] = 1.0
    zmean[:, 1:] = X
    zmean[:, 1 + mis] = mean_m
    zcov = np.zeros((k, p + 1, p + 1))
    zcov[:, (1 + mis)[:, None], (1 + mis)[None, :]] = cov_m
    return zmean, zcov


def _complete_batch(spec: ModelSpec, y: np.ndarray, X: np.ndarray) -> _Batch:
    D = design_matrix(spec, X)
    return _Batch(y * y, y[:, None] * D, D[:, :, None] * D[:, None, :], X.copy(),
                  X[:, :, None] * X[:, None, :])


def _mdp1_batch(spec, theta, X, obs, mis) -> _Batch:
    cond = _condition_group(theta, obs, mis, X[:, obs])
    zmean, zcov = _z_params(spec, X, mis, cond.mean, cond.cov)
    ed, eddt = design_moments(spec, zmean, zcov)
    beta = theta.beta
    yd = _rowdot(eddt, beta)
    y2 = theta.sigma2_eps + _rowdot(yd, beta)
    return _Batch(y2, yd, eddt, *_x_blocks(spec, ed, eddt))


def mdp2_posterior(spec: ModelSpec, theta: Theta, y: np.ndarray, X: np.ndarray,
                   obs: np.ndarray, mis: np.ndarray):
    """Gaussian law of the missing predictors given y and observed predictors.

    Returns ``(mean (k, m), cov (k, m, m), cond, alpha0, alpha1)``. The
    posterior precision is ``Sigma_c^-1 + alpha1 alpha1^T / sigma2``; it is
    applied as the equivalent rank-one covariance update so ``Sigma_c`` is
    never inverted.
    """
    beta = theta.beta
    p = spec.p
    x_o = X[:, obs]
    cond = _condition_group(theta, obs, mis, x_o)
    b_f = beta[1:p + 1]
    B = _beta_s(spec, beta)
    quad = (x_o * _rowdot(x_o[:, None, :], B[np.ix_(obs, obs)][None])).sum(axis=1)
    alpha0 = y - beta[0] - _rowdot(x_o, b_f[obs]) - 0.5 * quad
    alpha1 = b_f[mis] + _rowdot(x_o[:, None, :], B[np.ix_(mis, obs)][None])
    s = _rowdot(alpha1[:, None, :], cond.cov[None])          # Sigma_c alpha1
    v = theta.sigma2_eps + _rowdot(alpha1, s)
    resid = alpha0 - _rowdot(alpha1, cond.mean)
    mean = cond.mean + s * (resid / v)[:, None]
    cov = cond.cov[None] - s[:, :, None] * s[:, None, :] / v[:, None, None]
    cov = (cov + np.swapaxes(cov, 1, 2)) / 2
    return mean, cov, cond, alpha0, alpha1


def _mdp2_batch(spec, theta, y, X, obs, mis) -> _Batch:
    mean, cov, *_ = mdp2_posterior(spec, theta, y, X, obs, mis)
    zmean, zcov = _z_params(spec, X, mis, mean, cov)
    ed, eddt = design_moments(spec, zmean, zcov)
    return _Batch(y * y, y[:, None] * ed, eddt, *_x_blocks(spec, ed, eddt))


@dataclass
class _Grid:
    offsets: np.ndarray     # (G, m) displacement from the conditional mean
    log_prior: np.ndarray   # (G,) normalised log N(offset; 0, Sigma_c)
    log_cell: float         # log cell volume


def build_grid(cond_cov: np.ndarray, grid: GridConfig) -> _Grid:
    """Tensor midpoint grid spanning mean +/- half_width_sd conditional sds."""
    m = cond_cov.shape[0]
    n_axis = grid.points_per_axis(m)
    cov = pd_guard(cond_cov, "conditional covariance")
    sd = np.sqrt(np.diag(cov))
    hw = grid.half_width_sd
    width = 2.0 * hw / n_axis
    ticks = -hw + (np.arange(n_axis) + 0.5) * width
    mesh = np.stack(np.meshgrid(*([ticks] * m), indexing="ij"), axis=-1).reshape(-1, m)
    offsets = mesh * sd
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, offsets.T).T
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    log_prior = -0.5 * (white ** 2).sum(axis=1) - 0.5 * (m * math.log(2 * math.pi) + logdet)
    log_cell = float(np.log(width * sd).sum())
    return _Grid(offsets, log_prior, log_cell)


def _grid_nodes(spec, theta, X, obs, mis, grid: GridConfig):
    """Grid and design values at every node, laid out (d, k, G) for fast reductions."""
    cond = _condition_group(theta, obs, mis, X[:, obs])
    g = build_grid(cond.cov, grid)
    k, G, p = X.shape[0], g.offsets.shape[0], spec.p
    Dt = np.empty((spec.d, k, G))
    Dt[0] = 1.0
    for j in obs:
        Dt[1 + j] = X[:, j, None]
    for a, j in enumerate(mis):
        np.add(cond.mean[:, a, None], g.offsets[None, :, a], out=Dt[1 + j])
    for i, (j, l) in enumerate(spec.pairs, start=p + 1):
        np.multiply(Dt[1 + j], Dt[1 + l], out=Dt[i])
    return g, Dt


def _node_fit(beta, Dt):
    # coefficient-by-coefficient so every node sees the same operation order
    fit = Dt[0] * beta[0]
    for i in range(1, Dt.shape[0]):
        fit += Dt[i] * beta[i]
    return fit


def _grid_log_weights(theta, y, Dt, g: _Grid):
    """Unnormalised log P(y | x_g) P(x_g | x_O); y factor skipped when y is NaN."""
    has_y = ~np.isnan(y)
    if not has_y.any():
        return np.broadcast_to(g.log_prior, Dt.shape[1:]).copy()
    s2 = theta.sigma2_eps
    if has_y.all():
        resid = y[:, None] - _node_fit(theta.beta, Dt)
        return g.log_prior - 0.5 * resid ** 2 / s2 - 0.5 * math.log(2 * math.pi * s2)
    logw = np.broadcast_to(g.log_prior, Dt.shape[1:]).copy()
    resid = y[has_y, None] - _node_fit(theta.beta, Dt[:, has_y])
    logw[has_y] += -0.5 * resid ** 2 / s2 - 0.5 * math.log(2 * math.pi * s2)
    return logw


def _grid_batch(spec, theta, y, X, obs, mis, grid: GridConfig) -> _Batch:
    g, Dt = _grid_nodes(spec, theta, X, obs, mis, grid)
    logw = _grid_log_weights(theta, y, Dt, g)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    wD = Dt * w
    ed = wD.sum(axis=2).T
    eddt = np.matmul(wD.transpose(1, 0, 2), Dt.transpose(1, 2, 0))
    eddt = (eddt + np.swapaxes(eddt, 1, 2)) / 2
    has_y = ~np.isnan(y)
    y_fill = np.where(has_y, y, 0.0)
    yd = y_fill[:, None] * ed
    y2 = y_fill * y_fill
    if (~has_y).any():
        # y integrated exactly at each node: E[y|x] = d'b, E[y^2|x] = s2 + (d'b)^2
        miss = ~has_y
        fit = _node_fit(theta.beta, Dt[:, miss])
        wf = w[miss] * fit
        yd[miss] = (Dt[:, miss] * wf).sum(axis=2).T
        y2[miss] = theta.sigma2_eps + (wf * fit).sum(axis=1)
    return _Batch(y2, yd, eddt, *_x_blocks(spec, ed, eddt))


@dataclass
class PatternGroup:
    rows: np.ndarray
    r_y: bool
    r_x: tuple
    mdp: MDP

    @property
    def obs(self) -> np.ndarray:
        return np.flatnonzero(self.r_x)

    @property
    def mis(self) -> np.ndarray:
        return np.flatnonzero(~np.asarray(self.r_x))


class CasePlan:
    """Rows of a dataset grouped by observedness pattern.

    The complete-case sums do not depend on theta, so they are formed once.
    """

    def __init__(self, spec: ModelSpec, y, X):
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != spec.p or y.shape != (X.shape[0],):
            raise ValueError(f"data must be y (n,) and X (n, {spec.p}); got {y.shape}, {X.shape}")
        if X.shape[0] == 0:
            raise ValueError("dataset is empty")
        self.spec, self.y, self.X = spec, y, X
        r_y = ~np.isnan(y)
        r_x = ~np.isnan(X)
        complete = r_y & r_x.all(axis=1)
        self.complete_rows = np.flatnonzero(complete)
        self.complete_stats = (_complete_batch(spec, y[complete], X[complete]).total()
                               if complete.any() else SumStats.zeros(spec))
        keys: dict = {}
        for i in np.flatnonzero(~complete):
            keys.setdefault((bool(r_y[i]), tuple(bool(v) for v in r_x[i])), []).append(i)
        self.groups = [PatternGroup(np.array(rows), ry, rx, classify(spec, ry, rx))
                       for (ry, rx), rows in sorted(keys.items())]

    @property
    def n(self) -> int:
        return self.y.size

    def route(self, group: PatternGroup, method: Method) -> str:
        if group.mis.size == 0:
            return "mdp1"  # only y missing: nothing to integrate over
        if group.mdp is MDP.MDP3 or Method(method) is Method.NI:
            return "grid"
        return "mdp1" if group.mdp is MDP.MDP1 else "mdp2"

    def group_batch(self, group: PatternGroup, theta: Theta, method: Method,
                    grid: GridConfig) -> _Batch:
        spec = self.spec
        route = self.route(group, method)
        obs, mis = group.obs, group.mis
        out = []
        for start in range(0, group.rows.size, _CHUNK):
            rows = group.rows[start:start + _CHUNK]
            y, X = self.y[rows], self.X[rows]
            if route == "mdp1":
                out.append(_mdp1_batch(spec, theta, X, obs, mis))
            elif route == "mdp2":
                out.append(_mdp2_batch(spec, theta, y, X, obs, mis))
            else:
                out.append(_grid_batch(spec, theta, y, X, obs, mis, grid))
        return out[0] if len(out) == 1 else _Batch.concat(out)

    def incomplete_batches(self, theta, method, grid):
        for group in self.groups:
            try:
                yield group, self.group_batch(group, theta, method, grid)
            except np.linalg.LinAlgError as exc:
                raise type(exc)(f"E-step failed for rows {group.rows.tolist()}: {exc}") from exc

    def accumulate(self, theta: Theta, method: Method = Method.HYB,
                   grid: GridConfig = GridConfig()) -> SumStats:
        batches = [b for _, b in self.incomplete_batches(theta, method, grid)]
        if not batches:
            return self.complete_stats
        inc = _Batch.concat(batches).total()
        if self.complete_rows.size == 0:
            return inc
        return self.complete_stats + inc

    def case_stats(self, theta: Theta, method: Method = Method.HYB,
                   grid: GridConfig = GridConfig()) -> list:
        """Per-row ExpectedStats in original row order."""
        out = [None] * self.n
        if self.complete_rows.size:
            rows = self.complete_rows
            batch = _complete_batch(self.spec, self.y[rows], self.X[rows])
            for i, r in enumerate(rows):
                out[r] = batch.case(i)
        for group, batch in self.incomplete_batches(theta, method, grid):
            for i, r in enumerate(group.rows):
                out[r] = batch.case(i)
        return out


def accumulate(spec: ModelSpec, theta: Theta, y, X, method: Method = Method.HYB,
               grid: GridConfig = GridConfig()) -> SumStats:
    """Sum of per-case expected statistics; HYB routes MDP3 to the grid, NI routes all."""
    return CasePlan(spec, y, X).accumulate(theta, Method(method), grid)


def _single(spec, y, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.p,):
        raise ValueError(f"expected {spec.p} predictor values, got shape {x.shape}")
    return np.array([float(y)]), x[None, :]


def estep_complete(spec: ModelSpec, theta: Theta, y: float, x) -> ExpectedStats:
    yy, X = _single(spec, y, x)
    if np.isnan(yy).any() or np.isnan(X).any():
        raise ValueError("estep_complete needs fully observed data")
    return _complete_batch(spec, yy, X).case(0)


def estep_mdp1(spec: ModelSpec, theta: Theta, x_obs) -> ExpectedStats:
    _, X = _single(spec, 0.0, x_obs)
    r_x = ~np.isnan(X[0])
    return _mdp1_batch(spec, theta, X, np.flatnonzero(r_x), np.flatnonzero(~r_x)).case(0)


def estep_mdp2(spec: ModelSpec, theta: Theta, y: float, x_obs) -> ExpectedStats:
    yy, X = _single(spec, y, x_obs)
    r_x = ~np.isnan(X[0])
    if np.isnan(yy[0]):
        raise ValueError("estep_mdp2 needs an observed y")
    # a fully missing pair is fine when its coefficient is zero: y stays linear in x_M
    live = [i for i, (j, k) in enumerate(spec.pairs, start=1 + spec.p)
            if not r_x[j] and not r_x[k] and theta.beta[i] != 0.0]
    if live:
        raise ValueError("pattern has a fully missing product term (MDP3)")
    return _mdp2_batch(spec, theta, yy, X, np.flatnonzero(r_x), np.flatnonzero(~r_x)).case(0)


def estep_mdp3(spec: ModelSpec, theta: Theta, y: float, x_obs,
               grid: GridConfig = GridConfig()) -> ExpectedStats:
    """Grid E-step for one case; ``y`` may be NaN (the NI route for MDP1)."""
    yy, X = _single(spec, y, x_obs)
    r_x = ~np.isnan(X[0])
    if r_x.all():
        raise ValueError("no missing predictors: use estep_complete / estep_mdp1")
    return _grid_batch(spec, theta, yy, X, np.flatnonzero(r_x), np.flatnonzero(~r_x),
                       grid).case(0)
