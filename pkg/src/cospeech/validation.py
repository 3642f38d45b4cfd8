"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np

from .exceptions import ShapeMismatch


def check_points(x, name="points", ndim=None, last=3, dtype=np.float64):
    """Return ``x`` as a finite float array whose trailing axis has size ``last``."""
    arr = np.asarray(x, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeMismatch(f"{name}: expected {ndim} dims, got shape {arr.shape}")
    if last is not None and (arr.ndim == 0 or arr.shape[-1] != last):
        raise ShapeMismatch(f"{name}: trailing axis must be {last}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ShapeMismatch(f"{names[0]} {np.shape(a)} and {names[1]} {np.shape(b)} differ in shape")


def check_one_hot(k):
    from .exceptions import NotOneHot

    k = np.asarray(k, dtype=np.float64)
    ok = (
        k.ndim >= 1
        and np.all((k == 0) | (k == 1))
        and np.all(k.sum(axis=-1) == 1)
    )
    if not ok:
        raise NotOneHot(f"speaker vector is not one-hot: {k!r}")
    return k


def as_sequence_batch(x, name, inner_ndim):
    """Promote a single sequence to a batch of one; return (batch, was_single)."""
    arr = np.asarray(x)
    if arr.ndim == inner_ndim:
        return arr[None], True
    if arr.ndim == inner_ndim + 1:
        return arr, False
    raise ShapeMismatch(f"{name}: expected {inner_ndim} or {inner_ndim + 1} dims, got {arr.shape}")
