import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embkit.exceptions import DimensionMismatch, EmptySet, KTooLarge, NeedTwoIdentities, ZeroVector
from embkit.identitybank import (
    IdentityRecord,
    PrototypeBank,
    SimilarityReport,
    bank_from_arrays,
    build_bank,
    filter_top_k,
    score_identities,
)
from embkit.sampler import make_sphere_clusters
from oracles import cosine_matrix


def duplicate_scenario(seed=5):
    """50 identities where the last one is an exact copy of the first."""
    X, y = make_sphere_clusters(50, 32, 5, 20.0, seed)
    X = X.copy()
    X[-5:] = X[:5]
    return X, y


def test_build_bank_examples():
    bank = build_bank([("a", (3, 4))])
    assert len(bank) == 1
    np.testing.assert_allclose(bank[0].prototype, [0.6, 0.8], atol=1e-15)

    bank = build_bank([("z", (1, 0)), ("b", (0, 1)), ("z", (1, 1))])
    assert [r.label for r in bank] == ["z", "b"]
    assert [r.n_sources for r in bank] == [2, 1]

    X, y = make_sphere_clusters(10, 16, 5, 20.0, 1)
    bank = bank_from_arrays(X, y)
    assert len(bank) == 10 and all(r.n_sources == 5 for r in bank)
    for r in bank:
        r.check()


def test_build_bank_errors():
    with pytest.raises(EmptySet):
        build_bank([])
    with pytest.raises(ZeroVector) as info:
        build_bank([("ok", (1, 0)), ("bad", (0, 0))])
    assert "bad" in str(info.value)
    with pytest.raises(DimensionMismatch):
        build_bank([("a", (1, 0)), ("b", (1, 0, 0))])


def test_record_check_detects_stale_prototype():
    r = IdentityRecord.from_vectors("x", [[1.0, 0.0], [0.0, 1.0]])
    r.check()
    r.prototype = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        r.check()


def test_score_examples():
    bank = build_bank([("a", (1, 0)), ("b", (0, 1))])
    reports = score_identities(bank)
    assert reports == [SimilarityReport("a", 0.0, "b"), SimilarityReport("b", 0.0, "a")]

    bank = build_bank([("d1", (1, 0, 0)), ("u", (0, 0, 1)), ("d2", (1, 0, 0))])
    reports = score_identities(bank)
    assert [r.label for r in reports] == ["u", "d1", "d2"]
    assert reports[-1].score == pytest.approx(1.0, abs=1e-6)
    assert reports[-1].nearest_label == "d1" and reports[-2].nearest_label == "d2"

    with pytest.raises(NeedTwoIdentities):
        score_identities(bank[:1])


def test_filter_examples():
    reports = score_identities(build_bank([("b", (0, 1)), ("a", (1, 0))]))
    assert filter_top_k(reports, 2) == ["a", "b"]
    assert filter_top_k(reports, 1) == ["a"]
    with pytest.raises(KTooLarge):
        filter_top_k(reports, 3)
    with pytest.raises(ValueError):
        filter_top_k(reports, 0)


def test_duplicates_sorted_last_against_bruteforce():
    X, y = duplicate_scenario()
    bank = bank_from_arrays(X, y)
    reports = score_identities(bank)

    P = np.vstack([r.prototype for r in bank])
    C = cosine_matrix(P)
    np.fill_diagonal(C, -np.inf)
    expected = sorted(((C[i].max(), bank[i].label) for i in range(len(bank))))
    assert [r.label for r in reports] == [lbl for _, lbl in expected]
    np.testing.assert_allclose([r.score for r in reports], [s for s, _ in expected], atol=1e-12)

    assert {r.label for r in reports[-2:]} == {y[0], y[-1]}
    assert all(abs(r.score - 1.0) <= 1e-6 for r in reports[-2:])
    keep = filter_top_k(reports, 48)
    assert set(keep) == set(y) - {y[0], y[-1]}


def test_mean_aggregate_against_bruteforce():
    X, y = make_sphere_clusters(12, 8, 3, 5.0, 2)
    bank = bank_from_arrays(X, y)
    C = cosine_matrix(np.vstack([r.prototype for r in bank]))
    by_label = {r.label: r.score for r in score_identities(bank, aggregate="mean")}
    for i, r in enumerate(bank):
        others = [C[i, j] for j in range(len(bank)) if j != i]
        assert by_label[r.label] == pytest.approx(sum(others) / len(others), abs=1e-12)


def test_block_size_and_threads_do_not_change_result():
    X, y = make_sphere_clusters(40, 16, 2, 3.0, 8)
    bank = bank_from_arrays(X, y)
    ref = score_identities(bank, block_size=7, n_jobs=1)
    assert score_identities(bank, block_size=7, n_jobs=4) == ref
    other = score_identities(bank, block_size=1000)
    assert [r.label for r in other] == [r.label for r in ref]
    np.testing.assert_allclose([r.score for r in other], [r.score for r in ref], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    X, y = make_sphere_clusters(15, 8, 2, 4.0, seed)
    bank = bank_from_arrays(X, y)
    perm = np.random.default_rng(seed).permutation(len(bank))
    a = score_identities(bank)
    b = score_identities([bank[i] for i in perm])
    assert [r.label for r in a] == [r.label for r in b]
    assert [r.nearest_label for r in a] == [r.nearest_label for r in b]
    np.testing.assert_allclose([r.score for r in a], [r.score for r in b], atol=1e-12)
    labels = {r.label for r in bank}
    assert len(a) == len(bank) and all(r.nearest_label in labels for r in a)
    for k in range(1, len(a)):
        assert filter_top_k(a, k) == filter_top_k(a, k + 1)[:k]


def test_prototype_bank_estimator():
    X, y = make_sphere_clusters(6, 16, 4, 30.0, 3)
    model = PrototypeBank().fit(X, y)
    assert list(model.classes_) == sorted(set(y))
    assert model.transform(X).shape == (24, 6)
    assert (model.predict(X) == y).all()
    assert model.record(y[0]).n_sources == 4
    assert len(model.top_k(3)) == 3
    assert model.get_params() == {"aggregate": "max", "block_size": 1024, "n_jobs": None}
