import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sympal.systems import cosine_pair, quartic_bump
from sympal.trigpoly import TrigPolynomial, evaluate, gradient, hessian

EPS = 0.01


def naive(f, z):
    return sum(c * (np.cos if ph == "cos" else np.sin)(2 * np.pi * np.dot(m, z)) for c, m, ph in f.terms)


def random_poly(seed, dim=2, n_terms=5, scale=1.0, wave=2):
    rng = np.random.default_rng(seed)
    terms = [(scale * rng.normal(), tuple(rng.integers(-wave, wave + 1, dim)), rng.choice(["cos", "sin"]))
             for _ in range(n_terms)]
    return TrigPolynomial(dim, terms)


def test_zero_function():
    f = TrigPolynomial.zero(2)
    z = np.array([0.3, -1.7])
    assert evaluate(f, z) == 0.0
    assert np.all(gradient(f, z) == 0)
    assert np.all(hessian(f, z) == 0)


def test_quartic_bump_at_origin():
    f = quartic_bump(EPS)
    assert abs(evaluate(f, [0.0, 0.0])) < 1e-15
    assert np.max(np.abs(gradient(f, [0.0, 0.0]))) < 1e-15
    assert np.max(np.abs(hessian(f, [0.0, 0.0]))) < 1e-13


def test_quartic_bump_matches_closed_form(rng):
    f = quartic_bump(EPS)
    z = rng.random((50, 2))
    expected = -EPS * (np.sin(np.pi * z[:, 0]) ** 4 + np.sin(np.pi * z[:, 1]) ** 4)
    assert np.allclose(f(z), expected, atol=1e-15)


def test_cosine_pair_value_and_gradient():
    f = cosine_pair(EPS)
    assert evaluate(f, [0.0, 0.0]) == pytest.approx(0.02, abs=1e-15)
    assert naive(f, [0.0, 0.0]) == pytest.approx(0.02, abs=1e-15)
    g = gradient(f, [0.25, 0.0])
    assert np.allclose(g, [-2 * np.pi * EPS, 0.0], atol=1e-15)
    h = 1e-5
    fd = [(f([0.25 + h, 0.0]) - f([0.25 - h, 0.0])) / (2 * h), (f([0.25, h]) - f([0.25, -h])) / (2 * h)]
    assert np.allclose(g, fd, atol=1e-7)


def test_single_cosine_hessian():
    f = TrigPolynomial(2, [(EPS, (1, 0), "cos")])
    assert np.allclose(hessian(f, [0.0, 0.0]), np.diag([-4 * np.pi**2 * EPS, 0.0]), atol=1e-15)


def test_naive_evaluator_agrees(rng):
    f = random_poly(1, dim=4, n_terms=8)
    for z in rng.random((20, 4)):
        assert evaluate(f, z) == pytest.approx(naive(f, z), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_periodicity(seed):
    f = random_poly(seed, dim=2)
    rng = np.random.default_rng(seed)
    for z in rng.random((20, 2)) * 4 - 2:
        for e in np.eye(2):
            assert abs(f(z + e) - f(z)) < 1e-12
        m = rng.integers(-5, 6, 2)
        assert abs(f(z + m) - f(z)) < 1e-12 * max(1.0, abs(f(z))) + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_derivatives_match_finite_differences(seed):
    # generating-function sized: the O(h^2) truncation term scales like |2 pi m|^4
    f = random_poly(seed, dim=2, n_terms=4, scale=0.01, wave=1)
    rng = np.random.default_rng(seed)
    h = 1e-4
    eye = np.eye(2)
    for z in rng.random((100, 2)):
        fd_g = np.array([(f(z + h * e) - f(z - h * e)) / (2 * h) for e in eye])
        fd_h = np.array([(f.gradient(z + h * e) - f.gradient(z - h * e)) / (2 * h) for e in eye])
        assert np.max(np.abs(f.gradient(z) - fd_g)) < 1e-6
        assert np.max(np.abs(f.hessian(z) - fd_h)) < 1e-6


def test_hessian_symmetric_and_batched(rng):
    f = random_poly(7, dim=4, n_terms=6)
    z = rng.random((10, 4))
    hs = f.hessian(z)
    assert hs.shape == (10, 4, 4)
    assert np.allclose(hs, np.swapaxes(hs, 1, 2))
    assert np.allclose(hs[3], f.hessian(z[3]))


def test_canonical_form_merges_and_orders():
    a = TrigPolynomial(2, [(1.0, (0, 1), "sin"), (2.0, (1, 0), "cos"), (1.0, (-1, 0), "cos")])
    b = TrigPolynomial(2, [(3.0, (1, 0), "cos"), (-1.0, (0, -1), "sin")])
    assert a == b
    assert hash(a) == hash(b)
    assert [t[1] for t in a.terms] == sorted(t[1] for t in a.terms)


def test_json_round_trip():
    f = random_poly(3, dim=2)
    data = json.loads(f.to_json())
    assert set(data) == {"dim", "terms"}
    assert all(set(t) == {"c", "m", "ph"} for t in data["terms"])
    assert TrigPolynomial.from_json(f.to_json()) == f
    assert TrigPolynomial.from_dict(f.to_dict()) == f


def test_dimension_mismatch():
    f = cosine_pair()
    with pytest.raises(ValueError):
        f.evaluate([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        TrigPolynomial(2, [(1.0, (1, 0, 0), "cos")])
    with pytest.raises(ValueError):
        TrigPolynomial(2, [(1.0, (1, 0), "tan")])


def test_difference_avoids_cancellation():
    f = quartic_bump(EPS)
    z0 = np.zeros(2)
    z = np.array([1e-5, 0.0])
    exact = -EPS * np.sin(np.pi * 1e-5) ** 4
    assert f.difference(z, z0) == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("name", ["sys_b", "sys_c", "sys_d"])
def test_reference_factors_match_finite_differences(name):
    from sympal.systems import SYSTEMS

    h = 1e-4
    for f in SYSTEMS[name]().factors:
        rng = np.random.default_rng(len(name))
        eye = np.eye(f.dim)
        for z in rng.random((100, f.dim)):
            fd_g = np.array([(f(z + h * e) - f(z - h * e)) / (2 * h) for e in eye])
            fd_h = np.array([(f.gradient(z + h * e) - f.gradient(z - h * e)) / (2 * h) for e in eye])
            assert np.max(np.abs(f.gradient(z) - fd_g)) < 1e-6
            assert np.max(np.abs(f.hessian(z) - fd_h)) < 1e-6
