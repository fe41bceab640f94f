"""Geometry on the unit hypersphere.

All arithmetic is float64 regardless of input precision.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_vector, check_same_dim
from .exceptions import AntipodalPair, EmptySet, InvalidParameter, ZeroVector

ZERO_NORM = 1e-12
COINCIDENT_ANGLE = 1e-6
ANTIPODAL_MARGIN = 1e-6

__all__ = [
    "BetaParams",
    "normalize",
    "normalize_rows",
    "cosine",
    "angle",
    "slerp",
    "slerp_many",
    "prototype",
    "sample_lambda",
    "sorted_mean",
]


@dataclass(frozen=True)
class BetaParams:
    alpha: float = 2.0
    beta: float = 2.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self):
        a, b = self.alpha, self.beta
        return a * b / ((a + b) ** 2 * (a + b + 1))


def _norm(v):
    # explicit sum of squares; rows and single vectors use the same reduction
    return np.sqrt(np.sum(v * v, axis=-1))


def normalize(v):
    """Project a non-zero vector onto the unit sphere."""
    v = as_vector(v)
    n = _norm(v)
    if not n > ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {n:.3g}")
    return v / n


def normalize_rows(X):
    X = as_matrix(X)
    n = _norm(X)
    bad = np.flatnonzero(~(n > ZERO_NORM))
    if bad.size:
        raise ZeroVector(f"row has norm {n[bad[0]]:.3g}", row=int(bad[0]))
    return X / n[:, None]


def cosine(a, b):
    a, b = as_vector(a, "a"), as_vector(b, "b")
    check_same_dim(a, b)
    # clamp: dot products of unit vectors can overshoot 1 by a few ulp
    return float(min(1.0, max(-1.0, np.dot(a, b))))


def angle(a, b):
    return math.acos(cosine(a, b))


def slerp(mu, e, lam):
    """Point at fraction ``lam`` of the great-circle arc from ``mu`` to ``e``.

    Both endpoints must be unit vectors. ``lam`` is restricted to [0, 1];
    the result is renormalized to absorb rounding.
    """
    mu, e = as_vector(mu, "mu"), as_vector(e, "e")
    check_same_dim(mu, e)
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameter(f"lambda must lie in [0, 1], got {lam!r}")
    theta = angle(mu, e)
    if theta >= math.pi - ANTIPODAL_MARGIN:
        raise AntipodalPair(f"endpoints are antipodal (angle {theta:.9f})")
    if theta < COINCIDENT_ANGLE:
        return mu.copy()
    s = math.sin(theta)
    v = (math.sin((1.0 - lam) * theta) / s) * mu + (math.sin(lam * theta) / s) * e
    return v / _norm(v)


def slerp_many(mu, E, lams):
    """Row-wise :func:`slerp` from one anchor ``mu`` toward each row of ``E``."""
    mu = as_vector(mu, "mu")
    E = as_matrix(E, "E")
    check_same_dim(mu, E)
    lams = np.asarray(lams, dtype=np.float64).reshape(-1)
    if lams.shape[0] != E.shape[0]:
        raise InvalidParameter("need one lambda per row")
    if np.any((lams < 0.0) | (lams > 1.0)):
        raise InvalidParameter("lambda must lie in [0, 1]")
    cos = np.clip(np.sum(E * mu, axis=1), -1.0, 1.0)
    theta = np.arccos(cos)
    bad = np.flatnonzero(theta >= math.pi - ANTIPODAL_MARGIN)
    if bad.size:
        raise AntipodalPair(f"endpoints are antipodal (angle {theta[bad[0]]:.9f})", row=int(bad[0]))
    near = theta < COINCIDENT_ANGLE
    safe = np.where(near, 1.0, theta)
    s = np.sin(safe)
    w_mu = np.sin((1.0 - lams) * safe) / s
    w_e = np.sin(lams * safe) / s
    V = w_mu[:, None] * mu + w_e[:, None] * E
    V /= _norm(V)[:, None]
    V[near] = mu
    return V


def sorted_mean(X):
    """Column means that depend only on the multiset of rows.

    Each column is sorted before a pairwise summation, so row order (and
    therefore scheduling order upstream) cannot change the result.
    """
    X = as_matrix(X)
    cols = np.sort(np.ascontiguousarray(X.T), axis=1)
    return np.sum(cols, axis=1) / X.shape[0]


def prototype(embs, renormalize=True):
    """Class prototype: the mean of ``embs``, projected back to the sphere by default."""
    X = np.asarray(embs, dtype=np.float64)
    if X.size == 0:
        raise EmptySet("prototype of an empty set")
    mean = sorted_mean(X)
    if not renormalize:
        return mean
    n = _norm(mean)
    if not n > ZERO_NORM:
        raise ZeroVector(f"prototype mean has norm {n:.3g}")
    return mean / n


def sample_lambda(params, rng):
    """One interpolation factor drawn from ``Beta(params.alpha, params.beta)``.

    ``rng`` is a caller-owned :class:`numpy.random.Generator`.
    """
    return float(rng.beta(params.alpha, params.beta))
