"""Data-generating process, missingness generator and per-coefficient metrics.

Randomness: every replication draws from its own PCG64 stream seeded by
``SeedSequence(condition_seed, spawn_key=(rep, purpose))``; ``purpose`` 0 is
data generation and 1 the bootstrap resampling, so any replication can be
rerun alone and parallel runs match serial ones.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .bootstrap import bootstrap_ci
from .em import EmConfig, fit
from .estep import Method
from .gaussian import GaussianParams
from .model import ModelSpec, Theta, design_matrix
from .patterns import MDP, classify

RESULT_COLUMNS = [
    "n", "p", "phi_mis", "phi_mdp3", "seed", "rep", "method", "coef", "order",
    "true", "estimate", "deviation", "square_error", "ci_low", "ci_high",
    "covered", "converged", "seconds",
]

_ROUND_GUARD = 1e-9


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    phi_mis: float
    phi_mdp3: float
    zeta: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise SimConfigError("n must be >= 1")
        if int(self.p) < 2:
            raise SimConfigError("p must be >= 2")
        for name in ("phi_mis", "phi_mdp3"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimConfigError(f"{name} must lie in [0, 1]")
        if not -1.0 <= self.zeta <= 1.0:
            raise SimConfigError("zeta must lie in [-1, 1]")


@dataclass
class SimTruth:
    theta_true: Theta
    spec: ModelSpec
    r2_adj_target: float
    anchor_index: int


@dataclass
class Missingness:
    r_y: np.ndarray       # (n,) bool, True = observed
    r_x: np.ndarray       # (n, p) bool
    labels: np.ndarray    # (n,) int: 0 complete, 1/2/3 assigned MDP
    r_star: np.ndarray    # latent propensity
    counts: tuple         # (n1, n2, n3)

    def apply(self, y, X):
        y = np.where(self.r_y, y, np.nan)
        X = np.where(self.r_x, X, np.nan)
        return y, X


def stream(seed: int, *key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def ceil_count(n: int, phi: float) -> int:
    """ceil(n * phi), tolerant of representation error (0.1 * 100 -> 10)."""
    return int(math.ceil(n * phi - _ROUND_GUARD))


def mdp_counts(n: int, phi_mis: float, phi_mdp3: float) -> tuple:
    phi12 = 0.5 * phi_mis * (1.0 - phi_mdp3)
    phi3 = phi_mis * phi_mdp3
    counts = (ceil_count(n, phi12), ceil_count(n, phi12), ceil_count(n, phi3))
    if sum(counts) > n:
        raise SimConfigError(f"missing-case counts {counts} exceed n={n}")
    return counts


def gen_predictors(config: SimConfig, rng: np.random.Generator | None = None):
    """mu ~ U(-3, 3)^p, Sigma = D C D with diag(D) ~ U(1, sqrt 3) and 0.3 correlations."""
    rng = rng if rng is not None else stream(config.seed)
    p = config.p
    mu = rng.uniform(-3.0, 3.0, size=p)
    D = np.diag(rng.uniform(1.0, math.sqrt(3.0), size=p))
    C = np.full((p, p), 0.3)
    np.fill_diagonal(C, 1.0)
    Sigma = D @ C @ D
    X = rng.multivariate_normal(mu, Sigma, size=config.n, method="cholesky")
    return GaussianParams(mu, Sigma), X


def draw_pairs(p: int, rng: np.random.Generator) -> tuple:
    """floor(p/2) distinct random pairs leaving at least one predictor out of every pair."""
    all_pairs = list(itertools.combinations(range(p), 2))
    k = p // 2
    for _ in range(1000):
        pick = rng.choice(len(all_pairs), size=k, replace=False)
        pairs = sorted(all_pairs[i] for i in pick)
        if len({v for pair in pairs for v in pair}) < p:
            return tuple(pairs)
    raise SimConfigError(f"could not draw {k} pairs leaving a non-product predictor (p={p})")


def sigma2_for_r2(var_fitted: float, r2: float) -> float:
    return var_fitted * (1.0 - r2) / r2


def r2_from_adjusted(r2_adj: float, n: int, d: int) -> float:
    return 1.0 - (1.0 - r2_adj) * (n - d) / (n - 1)


def gen_model(config: SimConfig, gauss: GaussianParams, X: np.ndarray,
              rng: np.random.Generator | None = None):
    """Random product pairs, beta ~ U(-3, 3)^d, and sigma2 solved to hit a drawn adjusted R^2."""
    rng = rng if rng is not None else stream(config.seed, 0)
    n, p = X.shape
    spec = ModelSpec(p, draw_pairs(p, rng))
    d = spec.d
    beta = rng.uniform(-3.0, 3.0, size=d)
    fitted = design_matrix(spec, X) @ beta
    var_fitted = float(np.var(fitted, ddof=1)) if n > 1 else 0.0
    for _ in range(100):
        r2_adj = float(rng.uniform(0.1, 0.5))
        r2 = r2_from_adjusted(r2_adj, n, d)
        if r2 > 0:
            break
    else:
        raise SimConfigError(f"adjusted R^2 conversion never positive for n={n}, d={d}")
    sigma2 = sigma2_for_r2(var_fitted, r2)
    if not sigma2 > 0:
        raise SimConfigError("fitted values have zero variance; cannot target R^2")
    y = fitted + rng.normal(0.0, math.sqrt(sigma2), size=n)
    in_pairs = {v for pair in spec.pairs for v in pair}
    candidates = [j for j in range(p) if j not in in_pairs]
    anchor = int(rng.choice(candidates))
    theta = Theta(beta, sigma2, gauss.mean, gauss.cov)
    return SimTruth(theta, spec, r2_adj, anchor), y


def _mdp1_row(rng, p, anchor):
    r = np.ones(p, dtype=bool)
    others = [j for j in range(p) if j != anchor]
    forced = others[rng.integers(len(others))]
    for j in others:
        r[j] = rng.random() < 0.5
    r[forced] = False
    return False, r


def _mdp2_row(rng, spec, anchor):
    p = spec.p
    r = np.ones(p, dtype=bool)
    others = [j for j in range(p) if j != anchor]
    forced = others[rng.integers(len(others))]
    set_ = {forced}
    r[forced] = False
    in_pairs = {v for pair in spec.pairs for v in pair}
    for j in others:
        if j not in in_pairs and j != forced:
            r[j] = rng.random() < 0.5
            set_.add(j)
    for j, k in spec.pairs:
        if j not in set_ and k not in set_:
            first, second = (j, k) if rng.random() < 0.5 else (k, j)
            r[first] = rng.random() < 0.5
            r[second] = not r[first]
            set_.update((j, k))
        elif j in set_ and k not in set_:
            r[k] = not r[j]
            set_.add(k)
        elif k in set_ and j not in set_:
            r[j] = not r[k]
            set_.add(j)
        elif not r[j] and not r[k]:
            # both fixed by overlapping pairs: reopen the one that was not forced
            r[k if k != forced else j] = True
    return True, r


def _mdp3_row(rng, spec, anchor):
    r = np.ones(spec.p, dtype=bool)
    pairs = [pair for pair in spec.pairs if anchor not in pair]
    forced = pairs[rng.integers(len(pairs))]
    r[list(forced)] = False
    for pair in pairs:
        if pair != forced and rng.random() < 0.5:
            r[list(pair)] = False
    return True, r


def gen_missingness(config: SimConfig, truth: SimTruth, X: np.ndarray, y: np.ndarray,
                    rng: np.random.Generator | None = None) -> Missingness:
    """MAR missingness driven by an always-observed anchor predictor.

    The top ``n1 + n2 + n3`` rows by latent propensity
    ``R* = zeta * z(anchor) + sqrt(1 - zeta^2) * e`` receive a random
    permutation of the exact label multiset; each labelled row then gets
    one forced missing variable (or product pair) and the label-specific
    Bernoulli(0.5) draws.
    """
    rng = rng if rng is not None else stream(config.seed, 0, 2)
    spec, a = truth.spec, truth.anchor_index
    n = X.shape[0]
    n1, n2, n3 = mdp_counts(n, config.phi_mis, config.phi_mdp3)
    if n3 and not [pair for pair in spec.pairs if a not in pair]:
        raise SimConfigError("MDP3 cases requested but the model has no product pair")
    mu_a = truth.theta_true.mu[a]
    sd_a = math.sqrt(truth.theta_true.Sigma[a, a])
    z = config.zeta
    r_star = z * (X[:, a] - mu_a) / sd_a + math.sqrt(1.0 - z * z) * rng.standard_normal(n)
    order = np.lexsort((np.arange(n), -r_star))
    top = order[:n1 + n2 + n3]
    labels = np.zeros(n, dtype=int)
    labels[top] = rng.permutation(np.repeat([1, 2, 3], [n1, n2, n3]))
    r_y = np.ones(n, dtype=bool)
    r_x = np.ones((n, spec.p), dtype=bool)
    for i in np.sort(top):
        if labels[i] == 1:
            r_y[i], r_x[i] = _mdp1_row(rng, spec.p, a)
        elif labels[i] == 2:
            r_y[i], r_x[i] = _mdp2_row(rng, spec, a)
        else:
            r_y[i], r_x[i] = _mdp3_row(rng, spec, a)
    return Missingness(r_y, r_x, labels, r_star, (n1, n2, n3))


_LABEL_MDP = {0: MDP.COMPLETE, 1: MDP.MDP1, 2: MDP.MDP2, 3: MDP.MDP3}


def labels_agree(truth: SimTruth, miss: Missingness) -> bool:
    return all(classify(truth.spec, ry, rx) is _LABEL_MDP[lab]
               for ry, rx, lab in zip(miss.r_y, miss.r_x, miss.labels))


def generate_dataset(config: SimConfig, rep: int = 0):
    """One replication: (truth, y_full, X_full, missingness) from its own stream."""
    rng = stream(config.seed, rep, 0)
    gauss, X = gen_predictors(config, rng)
    truth, y = gen_model(config, gauss, X, rng)
    miss = gen_missingness(config, truth, X, y, rng)
    return truth, y, X, miss


def coefficient_rows(config: SimConfig, rep: int, method, truth: SimTruth, estimate,
                     lower, upper, converged: bool, seconds: float) -> list:
    """Per-coefficient metric rows (deviation, square error, coverage)."""
    rows = []
    spec = truth.spec
    beta = truth.theta_true.beta
    for j in range(spec.d):
        true = float(beta[j])
        est = float(estimate[j]) if estimate is not None else math.nan
        lo = float(lower[j]) if lower is not None else math.nan
        hi = float(upper[j]) if upper is not None else math.nan
        dev = est - true
        rows.append({
            "n": config.n, "p": config.p, "phi_mis": config.phi_mis,
            "phi_mdp3": config.phi_mdp3, "seed": config.seed, "rep": rep,
            "method": Method(method).value, "coef": j, "order": spec.order(j),
            "true": true, "estimate": est, "deviation": dev, "square_error": dev * dev,
            "ci_low": lo, "ci_high": hi,
            "covered": int(lo <= true <= hi) if not math.isnan(lo) else 0,
            "converged": int(converged), "seconds": seconds,
        })
    return rows


def run_replication(config: SimConfig, rep: int, em: EmConfig, B: int, level: float = 0.95,
                    methods=(Method.HYB, Method.NI), timing: bool = True) -> list:
    truth, y_full, X_full, miss = generate_dataset(config, rep)
    y, X = miss.apply(y_full, X_full)
    boot_seed = int(np.random.SeedSequence(config.seed, spawn_key=(rep, 1)).generate_state(1)[0])
    rows = []
    for method in methods:
        cfg = EmConfig(Method(method), em.tol, em.max_iter, em.grid, False)
        start = time.perf_counter()
        try:
            point = fit(truth.spec, y, X, cfg)
            lower = upper = None
            if B:
                boot = bootstrap_ci(truth.spec, y, X, cfg, B, level, boot_seed,
                                    theta0=point.theta)
                lower, upper = boot.lower, boot.upper
            est, ok = point.theta.beta, point.converged
        except (np.linalg.LinAlgError, ValueError, RuntimeError):
            est = lower = upper = None
            ok = False
        seconds = time.perf_counter() - start if timing else 0.0
        rows.extend(coefficient_rows(config, rep, method, truth, est, lower, upper, ok, seconds))
    return rows


def _replication_job(args):
    return run_replication(*args)


def run_condition(config: SimConfig, reps: int, em: EmConfig = EmConfig(track_loglik=False),
                  B: int = 200, level: float = 0.95, threads: int = 1, timing: bool = True,
                  methods=(Method.HYB, Method.NI)) -> list:
    """All replications of one condition; rows merged in replication order."""
    jobs = [(config, rep, em, B, level, methods, timing) for rep in range(reps)]
    if threads > 1 and reps > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_replication_job, jobs))
    else:
        chunks = [_replication_job(job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def condition_seed(base_seed: int, index: int) -> int:
    """Seed of the ``index``-th condition in a sweep (uint64 from SeedSequence)."""
    return int(np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def expand_conditions(grid: dict, base_seed: int, zeta: float = 0.7) -> list:
    """Cartesian product over n, p, phi_mis, phi_mdp3 (in that nesting order)."""
    keys = ("n", "p", "phi_mis", "phi_mdp3")
    values = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    out = []
    for i, combo in enumerate(itertools.product(*values)):
        n, p, phi_mis, phi_mdp3 = combo
        out.append(dict(n=int(n), p=int(p), phi_mis=float(phi_mis), phi_mdp3=float(phi_mdp3),
                        zeta=zeta, seed=condition_seed(base_seed, i)))
    return out


def sim_config_dict(config: SimConfig) -> dict:
    return asdict(config)
