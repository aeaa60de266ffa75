"""Exact posterior inclusion probabilities by enumerating all 2^K supports.

Used as an independent check on the variational fit.  For a support ``Z``
with ``r`` active columns ``D_r``, integrating out ``beta_r ~ N(0, s^2 v_s I)``
and ``s^2 ~ IG(a, b)`` gives the Student-type marginal likelihood

    p(Y | Z) = (2 pi)^(-N/2) |I_r + v_s D_r^T D_r|^(-1/2) b^a Gamma(a + N/2) / Gamma(a)
               * (b + Q_Z / 2)^(-(a + N/2)),
    Q_Z = Y^T Y - Y^T D_r (D_r^T D_r + I / v_s)^(-1) D_r^T Y.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import gammaln, logsumexp

from .exceptions import TooLarge
from .ssvb import SsHyperparams

MAX_ENUM_FEATURES = 12


def log_marginal_likelihood(D, Y, mask, hyper: SsHyperparams) -> float:
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    N = D.shape[0]
    a, b, vs = hyper.noise_shape, hyper.noise_rate, hyper.slab_variance
    mask = np.asarray(mask, dtype=bool)
    quad = float(Y @ Y)
    logdet = 0.0
    if mask.any():
        Dr = D[:, mask]
        r = Dr.shape[1]
        M = Dr.T @ Dr + np.eye(r) / vs
        L = np.linalg.cholesky(M)
        z = np.linalg.solve(L, Dr.T @ Y)
        quad -= float(z @ z)
        logdet = r * np.log(vs) + 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * N * np.log(2.0 * np.pi) - 0.5 * logdet + a * np.log(b)
                 + gammaln(a + 0.5 * N) - gammaln(a) - (a + 0.5 * N) * np.log(b + 0.5 * quad))


def exact_ss_posterior(D, Y, hyper: SsHyperparams = SsHyperparams()) -> np.ndarray:
    """Exact inclusion probability of every column under the spike-and-slab prior."""
    D = np.asarray(D, dtype=float)
    K = D.shape[1]
    if K > MAX_ENUM_FEATURES:
        raise TooLarge(f"enumeration limited to K <= {MAX_ENUM_FEATURES}, got {K}")
    p0 = hyper.inclusion_prior
    masks = np.array(list(itertools.product([False, True], repeat=K)), dtype=bool)
    logpost = np.empty(len(masks))
    for i, m in enumerate(masks):
        r = int(m.sum())
        logpost[i] = (log_marginal_likelihood(D, Y, m, hyper)
                      + r * np.log(p0) + (K - r) * np.log1p(-p0))
    post = np.exp(logpost - logsumexp(logpost))
    return masks.T.astype(float) @ post
