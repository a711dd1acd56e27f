import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prodreg_em.gaussian import (GaussianParams, MultiIndex, SingularCovarianceError,
                                 all_multi_indices, condition, fourth_moment,
                                 isserlis_oracle, mc_moment_oracle, product_moment)

from conftest import random_cov


def test_condition_independent_block_keeps_marginal():
    g = condition(GaussianParams(np.zeros(2), np.eye(2)), [1], [5.0])
    assert g.mean.tolist() == [0.0]
    assert g.cov.tolist() == [[1.0]]


def test_condition_on_nothing_is_identity():
    g = GaussianParams(np.array([1.0, 2.0]), np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert condition(g, [], []) is g


def test_condition_correlated_hand_value():
    # mean 0 + 0.5 * 2 = 1, var 1 - 0.5^2 = 0.75
    g = condition(GaussianParams(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]])), [1], [2.0])
    assert g.mean == pytest.approx([1.0], abs=1e-15)
    assert g.cov[0, 0] == pytest.approx(0.75, abs=1e-15)


def test_condition_errors():
    g = GaussianParams(np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularCovarianceError, match="observed block singular"):
        condition(GaussianParams(np.zeros(3), np.array(
            [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])), [0, 1], [0.0, 0.0])
    with pytest.raises(ValueError):
        condition(g, [0], [1.0, 2.0])


def test_gaussian_params_rejects_asymmetric():
    with pytest.raises(ValueError):
        GaussianParams(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]))


def test_multi_index_degree():
    assert MultiIndex((2, 0, 3)).degree == 5
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_product_moment_examples():
    g2 = GaussianParams(np.array([0.4, -1.3]), np.array([[1.2, 0.35], [0.35, 0.8]]))
    assert product_moment(g2, (0, 0)) == 1.0
    assert product_moment(GaussianParams(np.array([1.0]), np.eye(1)), (2,)) == 2.0
    assert product_moment(GaussianParams(np.zeros(1), np.eye(1)), (4,)) == 3.0
    assert product_moment(g2, (1, 1)) == pytest.approx(0.4 * -1.3 + 0.35, rel=1e-15)


def test_product_moment_sixth_univariate_noncentral():
    # E[X^6] for N(m, s2) = m^6 + 15 m^4 s2 + 45 m^2 s2^2 + 15 s2^3
    m, s2 = 0.7, 1.9
    expect = m ** 6 + 15 * m ** 4 * s2 + 45 * m ** 2 * s2 ** 2 + 15 * s2 ** 3
    got = product_moment(GaussianParams(np.array([m]), np.array([[s2]])), (6,))
    assert got == pytest.approx(expect, rel=1e-13)


def test_isserlis_examples():
    assert isserlis_oracle(np.eye(1), (3,)) == 0.0
    assert isserlis_oracle(np.eye(2), (2, 2)) == 1.0
    rho = 0.37
    assert isserlis_oracle(np.array([[1, rho], [rho, 1]]), (2, 2)) == pytest.approx(1 + 2 * rho ** 2)
    # (2k-1)!! for the univariate standard normal
    for k in range(1, 5):
        assert isserlis_oracle(np.eye(1), (2 * k,)) == math.prod(range(1, 2 * k, 2))


def test_product_moment_matches_isserlis_low_dim(rng):
    for p in (1, 2, 3):
        cov = random_cov(rng, p)
        g = GaussianParams(np.zeros(p), cov)
        for a in all_multi_indices(p, 6):
            want = isserlis_oracle(cov, a)
            got = product_moment(g, a)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want)), (p, a)


def test_mc_oracle_examples():
    g = GaussianParams(np.zeros(1), np.eye(1))
    assert mc_moment_oracle(g, (0,), 10_000, 1) == 1.0
    est, se = mc_moment_oracle(g, (2,), 1_000_000, 7, return_stderr=True)
    assert abs(est - 1.0) <= 3 * se
    assert mc_moment_oracle(g, (2,), 10_000, 3) == mc_moment_oracle(g, (2,), 10_000, 3)
    with pytest.raises(ValueError):
        mc_moment_oracle(g, (2,), 100, 0)


def test_product_moment_matches_monte_carlo_degree4(rng):
    for trial in range(10):
        p = int(rng.integers(1, 5))
        g = GaussianParams(rng.uniform(-1, 1, p), random_cov(rng, p))
        a = tuple(rng.multinomial(int(rng.integers(1, 5)), np.ones(p) / p))
        est, se = mc_moment_oracle(g, a, 200_000, seed=trial, return_stderr=True)
        assert abs(product_moment(g, a) - est) <= 4 * se + 1e-12


def test_fourth_moment_kernel_matches_recurrence(rng):
    q = 4
    mean = rng.normal(size=q)
    cov = random_cov(rng, q)
    g = GaussianParams(mean, cov)
    for i, j, k, l in itertools.product(range(q), repeat=4):
        a = np.zeros(q, dtype=int)
        for t in (i, j, k, l):
            a[t] += 1
        want = product_moment(g, tuple(a))
        got = fourth_moment(mean, cov, i, j, k, l)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_fourth_moment_allows_degenerate_coordinates():
    # a constant coordinate (variance 0) behaves as a fixed value
    mean = np.array([1.0, 2.0])
    cov = np.array([[0.0, 0.0], [0.0, 3.0]])
    assert fourth_moment(mean, cov, 0, 0, 1, 1) == pytest.approx(4.0 + 3.0)


finite = st.floats(-3, 3, allow_nan=False)


@st.composite
def gaussians(draw, p_min=2, p_max=4):
    p = draw(st.integers(p_min, p_max))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return GaussianParams(rng.uniform(-2, 2, p), random_cov(rng, p)), rng


@settings(max_examples=60, deadline=None)
@given(gaussians(p_min=3), st.data())
def test_sequential_conditioning_matches_joint(gr, data):
    g, rng = gr
    p = g.dim
    perm = rng.permutation(p)
    na = data.draw(st.integers(1, p - 2))
    nb = data.draw(st.integers(1, p - 1 - na))
    A, B = sorted(perm[:na]), sorted(perm[na:na + nb])
    x = rng.normal(size=p)
    once = condition(g, sorted(A + B), x[sorted(A + B)])
    first = condition(g, A, x[A])
    rest = [i for i in range(p) if i not in A]
    twice = condition(first, [rest.index(b) for b in B], x[B])
    assert np.allclose(once.mean, twice.mean, rtol=1e-10, atol=1e-10)
    assert np.allclose(once.cov, twice.cov, rtol=1e-10, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(gaussians(), st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4))
def test_conditional_covariance_ignores_observed_values(gr, v1, v2):
    g, rng = gr
    obs = [0]
    a = condition(g, obs, np.array(v1[:1]))
    b = condition(g, obs, np.array(v2[:1]))
    assert np.array_equal(a.cov, b.cov)


@settings(max_examples=40, deadline=None)
@given(gaussians(p_min=1, p_max=3), st.integers(0, 3), st.integers(0, 3))
def test_product_moment_shift_by_constant(gr, e0, e1):
    # E[X^a] for N(mu, S) equals sum over binomial splits of central moments
    g, rng = gr
    a = [0] * g.dim
    a[0] = e0
    a[-1] += e1
    centred = GaussianParams(np.zeros(g.dim), g.cov)
    total = 0.0
    ranges = [range(k + 1) for k in a]
    for b in itertools.product(*ranges):
        coef = math.prod(math.comb(ai, bi) for ai, bi in zip(a, b))
        shift = math.prod(m ** (ai - bi) for m, ai, bi in zip(g.mean, a, b))
        total += coef * shift * isserlis_oracle(g.cov, b)
    assert product_moment(g, tuple(a)) == pytest.approx(total, rel=1e-9, abs=1e-9)
