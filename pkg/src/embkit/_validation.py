"""Input validation shared by the estimators and the functional API."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatch, EmptySet


def as_vector(v, name="v"):
    """Return ``v`` as a finite 1-D float64 array."""
    # hot path for scalar geometry calls; check_array costs ~20x more here
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def as_matrix(X, name="X", allow_empty=False):
    """Return ``X`` as a finite 2-D float64 array (one vector per row)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        if allow_empty:
            return X.reshape(0, X.shape[-1] if X.ndim > 1 else 0)
        raise EmptySet(f"{name} is empty")
    return check_array(X, dtype=np.float64, input_name=name)


def check_same_dim(*arrays):
    dims = {a.shape[-1] for a in arrays}
    if len(dims) > 1:
        raise DimensionMismatch(f"dimensions differ: {sorted(dims)}")
    return dims.pop()
