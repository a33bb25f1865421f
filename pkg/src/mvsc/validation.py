"""Input validation helpers used across the public API."""

import numpy as np

from .errors import DimensionError, NumericError, ParameterError


def check_scalar(value, name, minimum=None, strict=False):
    """Coerce to float and check finiteness and an optional lower bound."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    if minimum is not None:
        if strict and not value > minimum:
            raise ParameterError(f"{name} must exceed {minimum}, got {value}")
        if not strict and value < minimum:
            raise ParameterError(f"{name} must be at least {minimum}, got {value}")
    return value


def check_vector(a, name="vector"):
    """Coerce to a 1-d float64 array with finite entries."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ParameterError(f"{name} must be one-dimensional, got shape {a.shape}")
    if a.size and not np.isfinite(a).all():
        raise NumericError(f"{name} contains non-finite entries")
    return a


def check_matrix(a, name="matrix", allow_empty=False):
    """Coerce to a 2-d float64 array with finite entries."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ParameterError(f"{name} must be two-dimensional, got shape {a.shape}")
    if not allow_empty and a.size == 0:
        raise ParameterError(f"{name} must be non-empty, got shape {a.shape}")
    if a.size and not np.isfinite(a).all():
        raise NumericError(f"{name} contains non-finite entries")
    return a


def check_views(views, name="views"):
    """Validate a list of per-view matrices sharing one sample count.

    Each view is a (view_dim, n_samples) array; samples sit in columns.
    Returns the views as float64 arrays.
    """
    if isinstance(views, np.ndarray):
        views = [views]
    views = list(views)
    if not views:
        raise ParameterError(f"{name} must contain at least one view")
    out = []
    for p, view in enumerate(views):
        out.append(check_matrix(view, f"{name}[{p}]"))
    n = out[0].shape[1]
    for p, view in enumerate(out):
        if view.shape[1] != n:
            raise DimensionError(
                f"view {p}: expected {n} samples (columns), got {view.shape[1]}"
            )
    return out
