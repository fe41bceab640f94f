import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from embkit.domainshift import DomainShift, ShiftVector, apply_shift, estimate_shift
from embkit.exceptions import DimensionMismatch, EmptySet, InvalidParameter


def test_estimate_shift_examples():
    s = estimate_shift([[1, 0]], [[0, 1]])
    np.testing.assert_array_equal(s.delta, [1, -1])
    assert (s.source_count, s.target_count) == (1, 1)

    X = np.random.default_rng(0).standard_normal((20, 6))
    np.testing.assert_allclose(estimate_shift(X, X).delta, 0, atol=1e-9)

    # hand-computed means (2, 0) and (0, 3)
    s = estimate_shift([[1, 0], [3, 0]], [[0, 2], [0, 4]])
    np.testing.assert_array_equal(s.delta, [2, -3])
    assert (s.source_count, s.target_count) == (2, 2)


def test_estimate_shift_errors():
    with pytest.raises(EmptySet):
        estimate_shift(np.empty((0, 2)), [[1, 2]])
    with pytest.raises(EmptySet):
        estimate_shift([[1, 2]], np.empty((0, 2)))
    with pytest.raises(DimensionMismatch):
        estimate_shift([[1, 2]], [[1, 2, 3]])


def test_apply_shift_examples():
    shift = ShiftVector(np.array([1.0, -1.0]), 1, 1)
    np.testing.assert_array_equal(apply_shift([0, 1], shift), [1, 0])
    zero = ShiftVector(np.zeros(2), 1, 1)
    np.testing.assert_array_equal(apply_shift([0.3, 0.7], zero), [0.3, 0.7])
    with pytest.raises(DimensionMismatch):
        apply_shift([1, 2, 3], shift)


def test_apply_shift_strength():
    shift = ShiftVector(np.array([2.0, -4.0]), 1, 1)
    np.testing.assert_array_equal(apply_shift([0, 0], shift, strength=0.5), [1, -2])
    np.testing.assert_array_equal(apply_shift([[1, 1]], shift, strength=0.0), [[1, 1]])


def test_shift_vector_counts_validated():
    with pytest.raises(InvalidParameter):
        ShiftVector(np.zeros(2), 0, 1)


def test_batch_mean_matching(rng):
    T = rng.standard_normal((300, 32)) + 2.0
    S = rng.standard_normal((170, 32)) * 0.5 - 1.0
    corrected = apply_shift(S, estimate_shift(T, S))
    np.testing.assert_allclose(corrected.mean(axis=0), T.mean(axis=0), atol=1e-6)


populations = st.tuples(st.integers(1, 40), st.integers(1, 40), st.integers(1, 16),
                        st.integers(0, 2**32 - 1))


@settings(max_examples=60, deadline=None)
@given(populations)
def test_antisymmetry_and_translation(p):
    nt, ns, d, seed = p
    rng = np.random.default_rng(seed)
    T, S = rng.standard_normal((nt, d)), rng.standard_normal((ns, d))
    np.testing.assert_allclose(estimate_shift(T, S).delta, -estimate_shift(S, T).delta, atol=1e-9)
    c = rng.uniform(-5, 5, d)
    np.testing.assert_allclose(estimate_shift(T + c, S).delta, estimate_shift(T, S).delta + c, atol=1e-9)


def test_shift_independent_of_row_order(rng):
    T, S = rng.standard_normal((100, 8)), rng.standard_normal((80, 8))
    a = estimate_shift(T, S).delta
    b = estimate_shift(T[rng.permutation(100)], S[rng.permutation(80)]).delta
    np.testing.assert_array_equal(a, b)


def test_pairwise_differences_preserved():
    # small integers: every sum and difference is exact in float64
    rng = np.random.default_rng(4)
    A = rng.integers(-100, 100, (10, 5)).astype(float)
    B = rng.integers(-100, 100, (10, 5)).astype(float)
    shift = ShiftVector(rng.integers(-50, 50, 5).astype(float), 1, 1)
    np.testing.assert_array_equal(apply_shift(A, shift) - apply_shift(B, shift), A - B)


def test_no_renormalization():
    shift = ShiftVector(np.array([1.0, 1.0]), 1, 1)
    out = apply_shift([1.0, 0.0], shift)
    assert np.linalg.norm(out) > 1.5


def test_domain_shift_estimator(rng):
    T, S = rng.standard_normal((50, 4)) + 3, rng.standard_normal((40, 4))
    ds = DomainShift().fit(S, target=T)
    assert ds.n_features_in_ == 4
    np.testing.assert_allclose(ds.transform(S).mean(axis=0), T.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(ds.inverse_transform(ds.transform(S)), S, atol=1e-12)
    half = clone(ds).set_params(strength=0.5).fit(S, target=T)
    np.testing.assert_allclose(half.transform(S) - S, 0.5 * ds.delta_ + 0 * S, atol=1e-12)
    assert ds.get_params() == {"strength": 1.0}
