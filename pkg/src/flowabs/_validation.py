"""Input validation helpers shared by the estimators and free functions."""
import numbers

import numpy as np
from sklearn.utils import check_array


def check_points(X, dim=None, name="X"):
    """Return ``X`` as a finite float array of shape ``(n, dim)``.

    A single point (1-D input) becomes one row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(1, -1)
    X = check_array(X, dtype=float, ensure_2d=True, input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has {X.shape[1]} coordinates, expected {dim}")
    return X


def check_time(t, allow_negative=False, name="t"):
    if not isinstance(t, numbers.Real) or not np.isfinite(t):
        raise ValueError(f"{name} must be a finite real number, got {t!r}")
    if t < 0 and not allow_negative:
        raise ValueError(f"{name} must be >= 0, got {t}")
    return float(t)


def check_count(n, minimum=1, name="n"):
    if not isinstance(n, numbers.Integral) or n < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {n!r}")
    return int(n)


def check_square(A, dim=None, name="A"):
    A = check_array(np.atleast_2d(np.asarray(A, dtype=float)), input_name=name)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise ValueError(f"{name} is {A.shape[0]}x{A.shape[0]}, expected dimension {dim}")
    return A


def check_time_grid(grid):
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise ValueError("time grid must be a nonempty list of finite times >= 0")
    return np.unique(grid)
