"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_field_array(X):
    """Validate an ensemble tensor of shape ``(N_s, N_t, N_x)``."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a 3D array (ensembles, time, space), got shape {X.shape}")
    if X.shape[1] < 2:
        raise ValueError("need at least two time points")
    if X.shape[2] < 3:
        raise ValueError("need at least three spatial nodes")
    return X


def check_regression(D, Y):
    D, Y = check_X_y(D, Y, dtype=np.float64, y_numeric=True)
    return D, Y


def check_inclusion(w, n_features):
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (n_features,):
        raise ValueError(f"w_init must have length {n_features}, got {w.shape}")
    if np.any(w <= 0) or np.any(w >= 1):
        raise ValueError("w_init entries must lie strictly inside (0, 1)")
    return w
