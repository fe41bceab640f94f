"""Global mean-offset correction between a source and a target population."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector, check_same_dim
from .exceptions import DimensionMismatch, InvalidParameter
from .hypersphere import sorted_mean


@dataclass(frozen=True)
class ShiftVector:
    delta: np.ndarray
    source_count: int
    target_count: int

    def __post_init__(self):
        if self.source_count < 1 or self.target_count < 1:
            raise InvalidParameter("population counts must be >= 1")

    @property
    def dim(self):
        return self.delta.shape[0]


def estimate_shift(target, source):
    """``mean(target) - mean(source)``; the populations may differ in size."""
    T = as_matrix(target, "target")
    S = as_matrix(source, "source")
    check_same_dim(T, S)
    delta = sorted_mean(T) - sorted_mean(S)
    return ShiftVector(delta=delta, source_count=S.shape[0], target_count=T.shape[0])


def apply_shift(v, shift, strength=1.0):
    """Add ``strength * delta`` to a vector or to every row of a matrix.

    No renormalization is applied.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 2:
        arr = as_matrix(arr)
    else:
        arr = as_vector(arr)
    if arr.shape[-1] != shift.dim:
        raise DimensionMismatch(f"vector has dimension {arr.shape[-1]}, shift has {shift.dim}")
    if strength == 1.0:
        return arr + shift.delta
    return arr + strength * shift.delta


class DomainShift(TransformerMixin, BaseEstimator):
    """Move source-domain vectors onto the target domain's mean.

    Parameters
    ----------
    strength : float, default=1.0
        Multiplier on the estimated offset; 1.0 applies it in full.

    Attributes
    ----------
    shift_ : ShiftVector
    delta_ : ndarray of shape (n_features,)
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> ds = DomainShift().fit(np.array([[0.0, 2.0], [0.0, 4.0]]),
    ...                        target=np.array([[1.0, 0.0], [3.0, 0.0]]))
    >>> ds.delta_
    array([ 2., -3.])
    """

    def __init__(self, strength=1.0):
        self.strength = strength

    def fit(self, X, target):
        if not np.isfinite(self.strength):
            raise InvalidParameter("strength must be finite")
        self.shift_ = estimate_shift(target, X)
        self.delta_ = self.shift_.delta
        self.n_features_in_ = self.shift_.dim
        return self

    @classmethod
    def from_shift(cls, shift, strength=1.0):
        est = cls(strength=strength)
        est.shift_ = shift
        est.delta_ = shift.delta
        est.n_features_in_ = shift.dim
        return est

    def transform(self, X):
        check_is_fitted(self, "shift_")
        return apply_shift(as_matrix(X), self.shift_, self.strength)

    def inverse_transform(self, X):
        check_is_fitted(self, "shift_")
        return apply_shift(as_matrix(X), self.shift_, -self.strength)
