"""Identity records, inter-identity similarity and near-duplicate filtering."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, check_same_dim
from .exceptions import (
    DimensionMismatch,
    EmbkitError,
    EmptySet,
    InvalidParameter,
    KTooLarge,
    NeedTwoIdentities,
)
from .hypersphere import normalize_rows, prototype

AGGREGATES = ("max", "mean")


@dataclass
class IdentityRecord:
    label: str
    sources: np.ndarray  # (S, D), unit rows
    prototype: np.ndarray  # (D,), unit

    @classmethod
    def from_vectors(cls, label, vectors):
        try:
            sources = normalize_rows(vectors)
            proto = prototype(sources)
        except EmbkitError as exc:
            exc.message = f"identity {label!r}: {exc.message}"
            raise
        return cls(label=label, sources=sources, prototype=proto)

    @property
    def n_sources(self):
        return self.sources.shape[0]

    def check(self, atol=1e-6):
        """Raise if the stored prototype disagrees with the sources."""
        expected = prototype(self.sources)
        if not np.allclose(expected, self.prototype, rtol=0.0, atol=atol):
            raise InvalidParameter(f"identity {self.label!r}: prototype does not match its sources")


@dataclass(frozen=True)
class SimilarityReport:
    label: str
    score: float
    nearest_label: str


def build_bank(manifest):
    """Group ``(label, vector)`` pairs into identity records.

    Records come out in first-appearance order of their labels.
    """
    groups = {}
    dim = None
    for i, (label, vec) in enumerate(manifest):
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DimensionMismatch(f"expected dimension {dim}, got {vec.shape[0]}", row=i)
        groups.setdefault(str(label), []).append(vec)
    if not groups:
        raise EmptySet("no identities in manifest")
    return [IdentityRecord.from_vectors(label, np.vstack(vecs)) for label, vecs in groups.items()]


def bank_from_arrays(X, y):
    X = as_matrix(X)
    y = [str(v) for v in np.asarray(y).reshape(-1)]
    if len(y) != X.shape[0]:
        raise InvalidParameter(f"{X.shape[0]} vectors but {len(y)} labels")
    return build_bank(zip(y, X))


def _score_block(P, start, stop, aggregate):
    G = P[start:stop] @ P.T
    rows = np.arange(stop - start)
    G[rows, rows + start] = -np.inf
    best = G.max(axis=1)
    nearest = [np.flatnonzero(G[r] == best[r]) for r in rows]
    if aggregate == "max":
        score = best
    else:
        G[rows, rows + start] = 0.0
        score = G.sum(axis=1) / (P.shape[0] - 1)
    return np.clip(score, -1.0, 1.0), nearest


def score_identities(bank, aggregate="max", block_size=1024, n_jobs=1):
    """Score each identity by its prototype cosine to the other identities.

    With ``aggregate="max"`` the score is the similarity to the closest other
    identity; ``"mean"`` averages over all others. Reports are sorted
    ascending by score (most distinct first), ties broken by label.

    The pairwise matrix is evaluated in row blocks of a fixed size, so the
    result does not depend on ``n_jobs``.
    """
    if aggregate not in AGGREGATES:
        raise InvalidParameter(f"aggregate must be one of {AGGREGATES}")
    if len(bank) < 2:
        raise NeedTwoIdentities(f"need at least two identities, got {len(bank)}")
    if block_size < 1:
        raise InvalidParameter("block_size must be >= 1")
    labels = [r.label for r in bank]
    P = np.vstack([r.prototype for r in bank])
    M = P.shape[0]
    bounds = [(s, min(s + block_size, M)) for s in range(0, M, block_size)]
    if n_jobs is None or n_jobs == 1 or len(bounds) == 1:
        parts = [_score_block(P, s, e, aggregate) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda b: _score_block(P, b[0], b[1], aggregate), bounds))
    reports = []
    for (start, _), (scores, nearest) in zip(bounds, parts):
        for r, (score, cand) in enumerate(zip(scores, nearest)):
            near = min(labels[j] for j in cand)
            reports.append(SimilarityReport(labels[start + r], float(score), near))
    reports.sort(key=lambda rep: (rep.score, rep.label))
    return reports


def filter_top_k(reports, k):
    """Labels of the ``k`` most distinct identities, in report order."""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidParameter(f"k must be a positive integer, got {k!r}")
    if k > len(reports):
        raise KTooLarge(f"k={k} exceeds the {len(reports)} available identities")
    return [rep.label for rep in reports[:k]]


class PrototypeBank(BaseEstimator):
    """Nearest-prototype model over labelled embeddings.

    Fitting groups rows by label, normalizes them and stores one unit
    prototype per identity. ``transform`` gives cosine similarities to the
    prototypes and ``predict`` the nearest identity.

    Parameters
    ----------
    aggregate : {"max", "mean"}, default="max"
        How :meth:`score_identities` reduces each identity's similarities.
    block_size : int, default=1024
    n_jobs : int or None, default=None
    """

    def __init__(self, aggregate="max", block_size=1024, n_jobs=None):
        self.aggregate = aggregate
        self.block_size = block_size
        self.n_jobs = n_jobs

    def fit(self, X, y):
        self.records_ = bank_from_arrays(X, y)
        self.classes_ = np.array([r.label for r in self.records_], dtype=object)
        self.prototypes_ = np.vstack([r.prototype for r in self.records_])
        self.n_features_in_ = self.prototypes_.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "prototypes_")
        X = normalize_rows(X)
        check_same_dim(X, self.prototypes_)
        return np.clip(X @ self.prototypes_.T, -1.0, 1.0)

    def predict(self, X):
        return self.classes_[np.argmax(self.transform(X), axis=1)]

    def score_identities(self):
        check_is_fitted(self, "records_")
        self.reports_ = score_identities(self.records_, aggregate=self.aggregate,
                                         block_size=self.block_size, n_jobs=self.n_jobs)
        return self.reports_

    def top_k(self, k):
        if not hasattr(self, "reports_"):
            self.score_identities()
        return filter_top_k(self.reports_, k)

    def record(self, label):
        check_is_fitted(self, "records_")
        for r in self.records_:
            if r.label == label:
                return r
        raise KeyError(label)


__all__ = [
    "IdentityRecord",
    "SimilarityReport",
    "build_bank",
    "bank_from_arrays",
    "score_identities",
    "filter_top_k",
    "PrototypeBank",
]
