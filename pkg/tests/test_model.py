import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prodreg_em.model import ModelSpec, Theta, design_matrix, design_vector, validate_theta


def test_design_vector_examples():
    spec = ModelSpec(2, [(0, 1)])
    assert design_vector(spec, [0, 0]).tolist() == [1, 0, 0, 0]
    assert design_vector(spec, [2, 3]).tolist() == [1, 2, 3, 6]
    assert design_vector(ModelSpec(3), [4, 5, 6]).tolist() == [1, 4, 5, 6]
    with pytest.raises(ValueError):
        design_vector(spec, [1, 2, 3])


def test_pairs_are_normalised_and_sorted():
    spec = ModelSpec(4, [(3, 1), (0, 2)])
    assert spec.pairs == ((0, 2), (1, 3))
    assert spec.d == 1 + 4 + 2
    for bad in ([(1, 1)], [(0, 4)], [(0, 1), (1, 0)]):
        with pytest.raises(ValueError):
            ModelSpec(4, bad)


def _valid_theta(spec):
    return Theta(np.zeros(spec.d), 1.0, np.zeros(spec.p), np.eye(spec.p))


def test_validate_theta_examples():
    spec = ModelSpec(2, [(0, 1)])
    assert validate_theta(spec, _valid_theta(spec)).ok
    bad = _valid_theta(spec)
    bad.sigma2_eps = -1.0
    report = validate_theta(spec, bad)
    assert not report.ok and report.message == "nonpositive error variance"
    cspec = spec.with_constraints([3])
    th = _valid_theta(cspec)
    th.beta[3] = 0.5
    assert validate_theta(cspec, th).message == "constraint violated"


def test_validate_theta_flags_non_pd_sigma():
    spec = ModelSpec(2)
    th = _valid_theta(spec)
    th.Sigma = np.array([[1.0, 2.0], [2.0, 1.0]])
    assert validate_theta(spec, th).message == "Sigma not positive definite"


def test_model_json_round_trip(tmp_path):
    spec = ModelSpec(3, [(0, 2)]).with_constraints([2])
    doc = spec.to_json()
    assert doc == {"p": 3, "pairs": [[0, 2]], "constrained_zero": [2]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    assert ModelSpec.load(path) == spec
    with pytest.raises(ValueError):
        ModelSpec.from_json({"p": 3, "constrained_zero": [9]})


def test_orders_and_names():
    spec = ModelSpec(3, [(0, 1)])
    assert [spec.order(i) for i in range(spec.d)] == [0, 1, 1, 1, 2]
    assert spec.names(["a", "b", "c"]) == ["(Intercept)", "a", "b", "c", "a:b"]


def test_theta_json_round_trip():
    th = Theta([1.0, 2.0], 0.5, [0.1], [[2.0]])
    back = Theta.from_json(json.loads(json.dumps(th.to_json())))
    assert np.array_equal(back.flat(), th.flat())


@st.composite
def specs(draw):
    p = draw(st.integers(1, 6))
    all_pairs = [(j, k) for j in range(p) for k in range(j + 1, p)]
    pairs = draw(st.lists(st.sampled_from(all_pairs), unique=True)) if all_pairs else []
    return ModelSpec(p, pairs)


@settings(max_examples=80, deadline=None)
@given(specs(), st.integers(0, 2 ** 32 - 1))
def test_product_slot_is_product_of_first_order_slots(spec, seed):
    x = np.random.default_rng(seed).normal(size=spec.p)
    d = design_vector(spec, x)
    assert len(d) == spec.d == 1 + spec.p + len(spec.pairs)
    for j, k in spec.pairs:
        assert d[spec.index_of((j, k))] == d[1 + j] * d[1 + k]


@settings(max_examples=80, deadline=None)
@given(specs())
def test_term_index_layout_is_bijective(spec):
    terms = [spec.term(i) for i in range(spec.d)]
    assert len(set(terms)) == spec.d
    assert [spec.index_of(t) for t in terms] == list(range(spec.d))
    z = np.arange(spec.p + 1, dtype=float) + 2.0
    x = z[1:]
    expect = np.prod(np.r_[1.0, x][spec.factor_index], axis=1)
    assert np.array_equal(design_vector(spec, x), expect)


def test_design_matrix_broadcasts_leading_axes():
    spec = ModelSpec(2, [(0, 1)])
    X = np.arange(12, dtype=float).reshape(3, 2, 2)
    D = design_matrix(spec, X)
    assert D.shape == (3, 2, 4)
    assert np.array_equal(D[1, 1], design_vector(spec, X[1, 1]))
