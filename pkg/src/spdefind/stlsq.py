"""Sequential thresholded least squares (the e-SINDy baseline)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_regression
from .exceptions import RankDeficientWarning


@dataclass(frozen=True)
class StlsqConfig:
    threshold: float = 0.3
    max_iters: int = 20
    ridge: float = 0.0

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


def _lstsq(D, Y, ridge):
    if ridge > 0:
        k = D.shape[1]
        D = np.vstack([D, np.sqrt(ridge) * np.eye(k)])
        Y = np.concatenate([Y, np.zeros(k)])
    coef, _, rank, _ = np.linalg.lstsq(D, Y, rcond=None)
    return coef, rank < D.shape[1]


def stlsq(D, Y, config: StlsqConfig = StlsqConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Threshold-and-refit until the active set stops changing.

    Returns ``(coef, active)``; inactive coefficients are exactly zero and every
    returned nonzero coefficient has magnitude at least ``config.threshold``.
    A rank-deficient refit falls back to the minimum-norm solution and emits
    :class:`RankDeficientWarning`.
    """
    coef, active, _ = stlsq_iterations(D, Y, config)
    return coef, active


def stlsq_iterations(D, Y, config: StlsqConfig = StlsqConfig()):
    """:func:`stlsq` that also reports how many least-squares refits ran."""
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    K = D.shape[1]
    active = np.ones(K, dtype=bool)
    coef = np.zeros(K)
    deficient = False
    n_iter = 0
    for _ in range(config.max_iters):
        coef = np.zeros(K)
        if not active.any():
            break
        sol, bad = _lstsq(D[:, active], Y, config.ridge)
        n_iter += 1
        deficient |= bad
        coef[active] = sol
        keep = active & (np.abs(coef) >= config.threshold)
        if np.array_equal(keep, active):
            break
        active = keep
    # max_iters may stop us before the last refit settled
    small = np.abs(coef) < config.threshold
    coef[small] = 0.0
    active &= ~small
    if deficient:
        warnings.warn("rank-deficient least squares in STLSQ; used minimum-norm solution",
                      RankDeficientWarning, stacklevel=3)
    return coef, active, n_iter


class STLSQRegressor(RegressorMixin, BaseEstimator):
    """Sequential thresholded least squares as an sklearn regressor.

    Parameters
    ----------
    threshold : float, default=0.3
        Hard magnitude threshold on coefficients.
    max_iters : int, default=20
    ridge : float, default=0.0
        Optional L2 penalty added to each least-squares refit.
    """

    def __init__(self, threshold=0.3, max_iters=20, ridge=0.0):
        self.threshold = threshold
        self.max_iters = max_iters
        self.ridge = ridge

    def fit(self, X, y):
        X, y = check_regression(X, y)
        self.n_features_in_ = X.shape[1]
        cfg = StlsqConfig(self.threshold, self.max_iters, self.ridge)
        self.coef_, self.support_ = stlsq(X, y, cfg)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_
