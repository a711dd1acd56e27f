import numpy as np
import pytest

from prodreg_em.model import ModelSpec, Theta, design_matrix


def random_cov(rng, p, rho_max=0.6):
    A = rng.normal(size=(p, p))
    S = A @ A.T / p + np.eye(p)
    sd = np.sqrt(np.diag(S))
    C = S / np.outer(sd, sd)
    C = np.clip(C, -rho_max, rho_max)
    np.fill_diagonal(C, 1.0)
    w, V = np.linalg.eigh(C)
    C = V @ np.diag(np.maximum(w, 0.2)) @ V.T
    scale = rng.uniform(0.7, 1.5, size=p)
    return C * np.outer(scale, scale)


def random_theta(rng, spec, beta_scale=1.0, sigma2=None):
    beta = rng.uniform(-beta_scale, beta_scale, size=spec.d) * spec.free_mask
    mu = rng.uniform(-1.0, 1.0, size=spec.p)
    s2 = sigma2 if sigma2 is not None else float(rng.uniform(0.5, 1.5))
    return Theta(beta, s2, mu, random_cov(rng, spec.p))


def simulate(rng, spec, theta, n):
    X = rng.multivariate_normal(theta.mu, theta.Sigma, size=n)
    y = design_matrix(spec, X) @ theta.beta + rng.normal(0, np.sqrt(theta.sigma2_eps), n)
    return y, X


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def spec3():
    return ModelSpec(3, [(0, 1)])
