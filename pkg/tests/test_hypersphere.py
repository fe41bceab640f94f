import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embkit.exceptions import AntipodalPair, DimensionMismatch, EmptySet, InvalidParameter, ZeroVector
from embkit.hypersphere import (
    BetaParams,
    angle,
    cosine,
    normalize,
    prototype,
    sample_lambda,
    slerp,
    slerp_many,
)
from oracles import random_unit, rotation_slerp

R2 = math.sqrt(2) / 2


def test_normalize_examples():
    np.testing.assert_allclose(normalize([3, 4]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(normalize([1, 0, 0]), [1, 0, 0])
    with pytest.raises(ZeroVector):
        normalize([0, 0])
    with pytest.raises(ZeroVector):
        normalize([1e-13, 0])


@pytest.mark.parametrize("a,b,expected", [
    ((1, 0), (0, 1), 0.0),
    ((1, 0), (1, 0), 1.0),
    ((1, 0), (-1, 0), -1.0),
])
def test_cosine_examples(a, b, expected):
    assert cosine(a, b) == expected


def test_cosine_clamps_rounding_overshoot():
    v = np.full(3, 1 / math.sqrt(3)) * (1 + 1e-15)
    assert cosine(v, v) <= 1.0
    assert angle(v, v) == 0.0


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine([1, 0], [1, 0, 0])


def test_angle_examples():
    assert angle((1, 0), (0, 1)) == pytest.approx(math.pi / 2, abs=1e-15)
    assert angle((0.6, 0.8), (0.6, 0.8)) == pytest.approx(0.0, abs=1e-7)
    assert angle((1, 0), (R2, R2)) == pytest.approx(math.pi / 4, abs=1e-12)


def test_slerp_endpoints_and_midpoint():
    mu, e = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    np.testing.assert_allclose(slerp(mu, e, 0.0), mu, atol=1e-15)
    np.testing.assert_allclose(slerp(mu, e, 1.0), e, atol=1e-15)
    np.testing.assert_allclose(slerp(mu, e, 0.5), [R2, R2], atol=1e-15)


def test_slerp_matches_rotation_oracle_d128():
    rng = np.random.default_rng(3)
    mu, e = random_unit(rng, 128), random_unit(rng, 128)
    np.testing.assert_allclose(slerp(mu, e, 0.3), rotation_slerp(mu, e, 0.3), atol=1e-6)


def test_slerp_rejects_antipodal_and_bad_lambda():
    with pytest.raises(AntipodalPair):
        slerp([1, 0], [-1, 0], 0.5)
    with pytest.raises(InvalidParameter):
        slerp([1, 0], [0, 1], 1.5)
    with pytest.raises(InvalidParameter):
        slerp([1, 0], [0, 1], -0.1)
    with pytest.raises(DimensionMismatch):
        slerp([1, 0], [0, 1, 0], 0.5)


def test_slerp_coincident_returns_anchor():
    mu = normalize([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(slerp(mu, mu, 0.7), mu)


def test_slerp_many_equals_scalar_slerp(rng):
    mu = random_unit(rng, 16)
    E = np.vstack([random_unit(rng, 16) for _ in range(7)])
    lams = rng.uniform(size=7)
    V = slerp_many(mu, E, lams)
    for v, e, lam in zip(V, E, lams):
        np.testing.assert_allclose(v, slerp(mu, e, lam), atol=1e-14)


def test_slerp_many_reports_antipodal_row():
    with pytest.raises(AntipodalPair) as info:
        slerp_many([1, 0], [[0, 1], [-1, 0]], [0.5, 0.5])
    assert info.value.row == 1


unit_pairs = st.integers(min_value=0, max_value=2**32 - 1).map(np.random.default_rng)


@settings(max_examples=200, deadline=None)
@given(seed=unit_pairs, d=st.sampled_from([2, 3, 8, 64]), lam=st.floats(0, 1))
def test_slerp_properties(seed, d, lam):
    mu, e = random_unit(seed, d), random_unit(seed, d)
    theta = angle(mu, e)
    if theta >= math.pi - 1e-3:
        return
    v = slerp(mu, e, lam)
    assert abs(np.linalg.norm(v) - 1) <= 1e-6
    assert abs(angle(mu, v) - lam * theta) <= 1e-6
    np.testing.assert_allclose(v, rotation_slerp(mu, e, lam), atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=unit_pairs, lams=st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_slerp_geodesic_monotone(seed, lams):
    l1, l2 = sorted(lams)
    mu, e = random_unit(seed, 8), random_unit(seed, 8)
    a1 = angle(mu, slerp(mu, e, l1))
    a2 = angle(mu, slerp(mu, e, l2))
    assert a1 <= a2 + 1e-9


@given(a=arrays(np.float64, 5, elements=st.floats(-10, 10)),
       b=arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_cosine_symmetric(a, b):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    a, b = normalize(a), normalize(b)
    assert cosine(a, b) == cosine(b, a)


def test_prototype_examples():
    np.testing.assert_array_equal(prototype([[1.0, 0.0]]), [1.0, 0.0])
    np.testing.assert_allclose(prototype([[1, 0], [0, 1]]), [R2, R2], atol=1e-15)
    np.testing.assert_allclose(prototype([[1, 0], [0, 1]], renormalize=False), [0.5, 0.5])
    with pytest.raises(ZeroVector):
        prototype([[1, 0], [-1, 0]])
    with pytest.raises(EmptySet):
        prototype(np.empty((0, 3)))


def test_prototype_of_copies(rng):
    v = random_unit(rng, 32)
    np.testing.assert_allclose(prototype(np.tile(v, (9, 1))), v, atol=1e-6)


def test_prototype_independent_of_row_order(rng):
    X = rng.standard_normal((50, 16))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    perm = rng.permutation(50)
    np.testing.assert_array_equal(prototype(X), prototype(X[perm]))


def test_beta_params_validation():
    with pytest.raises(InvalidParameter):
        BetaParams(0, 1)
    with pytest.raises(InvalidParameter):
        BetaParams(1, -2)
    with pytest.raises(InvalidParameter):
        BetaParams(float("nan"), 1)
    assert BetaParams() == BetaParams(2.0, 2.0)


@pytest.mark.parametrize("a,b", [(1, 1), (2, 2), (2, 5), (0.5, 0.5)])
def test_sample_lambda_moments(a, b):
    params = BetaParams(a, b)
    rng = np.random.default_rng(2024)
    draws = np.array([sample_lambda(params, rng) for _ in range(10_000)])
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert abs(draws.mean() - a / (a + b)) <= 0.01
    assert abs(draws.var() - a * b / ((a + b) ** 2 * (a + b + 1))) <= 0.005


def test_sample_lambda_reproducible():
    params = BetaParams(2, 2)
    x = [sample_lambda(params, np.random.default_rng(9)) for _ in range(3)]
    assert x[0] == x[1] == x[2]


def test_beta11_uniform_bins():
    rng = np.random.default_rng(77)
    draws = np.array([sample_lambda(BetaParams(1, 1), rng) for _ in range(10_000)])
    freq = np.histogram(draws, bins=20, range=(0, 1))[0] / draws.size
    assert np.all(np.abs(freq - 0.05) <= 0.25 * 0.05)
