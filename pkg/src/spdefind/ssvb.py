"""Spike-and-slab linear regression fitted by coordinate-ascent variational Bayes.

Model::

    Y | beta, Z, sigma^2 ~ N(D diag(Z) beta, sigma^2 I)
    beta_k | sigma^2     ~ N(0, sigma^2 v_s)
    Z_k                  ~ Bern(p_0)
    sigma^2              ~ IG(a_sigma, b_sigma)

with the mean-field family ``q(beta) q(sigma^2) prod_k q(Z_k)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, gammaln, logit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_inclusion, check_regression
from .exceptions import NoConvergenceWarning, SingularPrecision
from .stlsq import StlsqConfig, stlsq

ETA_CLAMP = 35.0
_JITTERS = (0.0, 1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class SsHyperparams:
    slab_variance: float = 10.0
    inclusion_prior: float = 0.1
    noise_shape: float = 1e-4
    noise_rate: float = 1e-4
    tau_init: float = 1000.0
    elbo_tol: float = 1e-6
    pip_threshold: float = 0.5
    max_iters: int = 500

    def __post_init__(self):
        for name in ("slab_variance", "noise_shape", "noise_rate", "tau_init", "elbo_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.inclusion_prior < 1:
            raise ValueError("inclusion_prior must lie strictly inside (0, 1)")
        if not 0 <= self.pip_threshold <= 1:
            raise ValueError("pip_threshold must lie in [0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class VbState:
    mu: np.ndarray
    Sigma: np.ndarray
    a_q: float
    b_q: float
    tau: float
    w: np.ndarray
    logdet_sigma: float = 0.0
    elbo_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.elbo_trace)


@dataclass
class SparsePosterior:
    selected: np.ndarray
    coef_mean: np.ndarray
    coef_cov: np.ndarray
    pip: np.ndarray
    elbo_final: float
    names: list | None = None
    n_iter: int = 0
    converged: bool = True

    @property
    def coef_std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.coef_cov), 0.0, None))

    @property
    def support(self) -> np.ndarray:
        mask = np.zeros(self.pip.shape[0], dtype=bool)
        mask[self.selected] = True
        return mask

    @property
    def selected_names(self) -> list:
        if self.names is None:
            return [str(k) for k in self.selected]
        return [self.names[k] for k in self.selected]


@dataclass(frozen=True)
class _Gram:
    """Sufficient statistics of ``(D, Y)``; the sweep only needs these."""

    G: np.ndarray
    DtY: np.ndarray
    YtY: float
    n: int

    @classmethod
    def of(cls, D, Y):
        return cls(D.T @ D, D.T @ Y, float(Y @ Y), D.shape[0])


def _precision_inverse(P):
    scale = float(np.mean(np.diag(P)))
    K = P.shape[0]
    for jitter in _JITTERS:
        try:
            c, low = cho_factor(P + jitter * scale * np.eye(K), lower=True)
        except np.linalg.LinAlgError:
            continue
        d = np.diag(c)
        if np.all(np.isfinite(d)) and np.all(d > 0):
            Sigma = cho_solve((c, low), np.eye(K))
            return Sigma, -2.0 * float(np.sum(np.log(d)))
    raise SingularPrecision("variational precision is not positive definite even with jitter; "
                            "the dictionary is likely degenerate (e.g. duplicated columns)")


def _schur_weight(w):
    return np.outer(w, w) + np.diag(w * (1.0 - w))


def _noise_rate(gram, hyper, w, mu, Sigma):
    M = gram.G * _schur_weight(w) + np.eye(w.size) / hyper.slab_variance
    quad = gram.YtY - 2.0 * float(gram.DtY @ (w * mu)) + float(np.sum(M * (np.outer(mu, mu) + Sigma)))
    return hyper.noise_rate + 0.5 * quad


def _sweep(state: VbState, gram: _Gram, hyper: SsHyperparams) -> VbState:
    w = state.w.copy()
    K = w.size
    tau = state.tau
    M = gram.G * _schur_weight(w) + np.eye(K) / hyper.slab_variance
    Sigma, logdet = _precision_inverse(tau * M)
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = tau * Sigma @ (w * gram.DtY)
    a_q = hyper.noise_shape + 0.5 * gram.n + 0.5 * K
    b_q = _noise_rate(gram, hyper, w, mu, Sigma)
    tau = a_q / b_q

    # sequential in k, each update sees the already-updated w
    lp0 = logit(hyper.inclusion_prior)
    G = gram.G
    for k in range(K):
        cross = w * G[k] * (mu * mu[k] + Sigma[:, k])
        cross[k] = 0.0
        eta = (lp0 - 0.5 * tau * (mu[k] ** 2 + Sigma[k, k]) * G[k, k]
               + tau * (gram.DtY[k] * mu[k] - cross.sum()))
        w[k] = expit(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))

    # refresh q(sigma^2) against the new w so the closed-form ELBO is exact
    b_q = _noise_rate(gram, hyper, w, mu, Sigma)
    tau = a_q / b_q
    return replace(state, mu=mu, Sigma=Sigma, a_q=a_q, b_q=b_q, tau=tau, w=w,
                   logdet_sigma=logdet, elbo_trace=list(state.elbo_trace))


def vb_update_sweep(state: VbState, D, Y, hyper: SsHyperparams) -> VbState:
    """One full round of the closed-form variational updates.

    Order: ``Sigma``, ``mu``, ``a_q``, ``b_q``, ``tau``, then ``w_k`` for
    ``k = 1..K`` sequentially, and finally ``b_q``/``tau`` again for the new
    ``w``.  Every step maximizes the ELBO over one factor, so the ELBO
    cannot decrease.
    """
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    return _sweep(state, _Gram.of(D, Y), hyper)


def _kappa(n_features, n_rows, slab_variance):
    return 0.5 * n_features - 0.5 * n_rows * np.log(2.0 * np.pi) - 0.5 * n_features * np.log(slab_variance)


def _bernoulli_term(w, p0):
    """Minus the KL divergence of Bern(w) from the Bern(p0) prior, summed over terms."""
    return float(np.sum(w * np.log(p0 / w) + (1.0 - w) * np.log((1.0 - p0) / (1.0 - w))))


def _elbo(state, n, hyper):
    a, b = hyper.noise_shape, hyper.noise_rate
    return float(_kappa(state.w.size, n, hyper.slab_variance) + a * np.log(b) - gammaln(a)
                 + gammaln(state.a_q) - state.a_q * np.log(state.b_q) + 0.5 * state.logdet_sigma
                 + _bernoulli_term(state.w, hyper.inclusion_prior))


def compute_elbo(state: VbState, D, Y, hyper: SsHyperparams) -> float:
    """Closed-form ELBO, valid when ``b_q`` is consistent with ``(mu, Sigma, w)``."""
    return _elbo(state, np.asarray(D).shape[0], hyper)


def initial_state(n_features: int, n_rows: int, hyper: SsHyperparams, w_init) -> VbState:
    a_q = hyper.noise_shape + 0.5 * n_rows + 0.5 * n_features
    return VbState(mu=np.zeros(n_features), Sigma=hyper.slab_variance * np.eye(n_features),
                   a_q=a_q, b_q=a_q / hyper.tau_init, tau=hyper.tau_init,
                   w=np.array(w_init, dtype=float))


def select_model(state: VbState, terms: Sequence | None = None,
                 pip_threshold: float = 0.5) -> SparsePosterior:
    """Keep terms with ``w_k > pip_threshold``; zero the mean/covariance elsewhere."""
    pip = state.w.copy()
    sel = np.flatnonzero(pip > pip_threshold)
    K = pip.size
    mean = np.zeros(K)
    cov = np.zeros((K, K))
    mean[sel] = state.mu[sel]
    cov[np.ix_(sel, sel)] = state.Sigma[np.ix_(sel, sel)]
    names = None if terms is None else [t if isinstance(t, str) else t.name for t in terms]
    elbo = state.elbo_trace[-1] if state.elbo_trace else float("nan")
    return SparsePosterior(sel, mean, cov, pip, elbo, names, state.n_iter, state.converged)


def stlsq_inclusion_init(D, Y, config: StlsqConfig = StlsqConfig(), on=0.99, off=0.01) -> np.ndarray:
    """Initial inclusion probabilities: ``on`` for STLSQ-selected terms, ``off`` otherwise."""
    _, active = stlsq(D, Y, config)
    return np.where(active, on, off)


def vb_fit(D, Y, hyper: SsHyperparams = SsHyperparams(), w_init=None, terms=None,
           ) -> tuple[VbState, SparsePosterior]:
    """Iterate sweeps until the ELBO gain drops below ``hyper.elbo_tol``.

    The stopping test is checked from the second sweep on and ignores
    negative steps larger than the tolerance.  If ``max_iters`` is reached a
    :class:`NoConvergenceWarning` is emitted and the last state is returned
    with ``converged=False``.
    """
    D, Y = check_regression(D, Y)
    N, K = D.shape
    if np.any(np.all(D == 0.0, axis=0)):
        raise ValueError("dictionary has an all-zero column")
    if w_init is None:
        w_init = stlsq_inclusion_init(D, Y)
    w_init = check_inclusion(w_init, K)
    state = _iterate(_Gram.of(D, Y), hyper, w_init)
    if not state.converged:
        warnings.warn(f"VB did not converge in {hyper.max_iters} sweeps", NoConvergenceWarning,
                      stacklevel=2)
    return state, select_model(state, terms, hyper.pip_threshold)


def _iterate(gram: _Gram, hyper: SsHyperparams, w_init) -> VbState:
    state = initial_state(w_init.size, gram.n, hyper, w_init)
    trace = []
    for it in range(hyper.max_iters):
        state = _sweep(state, gram, hyper)
        trace.append(_elbo(state, gram.n, hyper))
        if it >= 1:
            gain = trace[-1] - trace[-2]
            if -hyper.elbo_tol <= gain < hyper.elbo_tol:
                state.converged = True
                break
    state.elbo_trace = trace
    return state


def _support_moves(selected, unselected):
    for k in selected:
        yield (k,), ()
    for i, k in enumerate(selected):
        for j in selected[i + 1:]:
            yield (k, j), ()
    for k in selected:
        for j in unselected:
            yield (k,), (j,)


def refine_support(D, Y, state: VbState, hyper: SsHyperparams = SsHyperparams(), terms=None,
                   on=0.99, off=0.01, max_rounds=50) -> tuple[VbState, SparsePosterior]:
    """Greedy local search over supports, scored by the converged ELBO.

    Coordinate ascent started from one inclusion vector can stall in a local
    optimum when dictionary columns are strongly collinear.  Each round
    restarts the fit from the current ``w`` with one selected term switched
    off, two selected terms switched off, or one selected term swapped for an
    unselected one, and moves to the best restart if it raises the final
    ELBO by more than ``hyper.elbo_tol``.  The returned state therefore never
    has a lower ELBO than ``state``.
    """
    D, Y = check_regression(D, Y)
    gram = _Gram.of(D, Y)
    best = state
    for _ in range(max_rounds):
        sel = np.flatnonzero(best.w > hyper.pip_threshold)
        unsel = np.flatnonzero(best.w <= hyper.pip_threshold)
        base = np.clip(best.w, off, on)
        cand = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoConvergenceWarning)
            for drop, add in _support_moves(list(sel), list(unsel)):
                w = base.copy()
                w[list(drop)] = off
                w[list(add)] = on
                trial = _iterate(gram, hyper, w)
                if cand is None or trial.elbo_trace[-1] > cand.elbo_trace[-1]:
                    cand = trial
        if cand is None or cand.elbo_trace[-1] <= best.elbo_trace[-1] + hyper.elbo_tol:
            break
        best = cand
    return best, select_model(best, terms, hyper.pip_threshold)


class SpikeSlabRegressor(RegressorMixin, BaseEstimator):
    """Sparse linear regression with a spike-and-slab prior, fitted by VB.

    Parameters
    ----------
    slab_variance : float, default=10.0
        Slab variance ``v_s`` (in units of the noise variance).
    inclusion_prior : float, default=0.1
        Prior inclusion probability ``p_0``.
    noise_shape, noise_rate : float, default=1e-4
        Inverse-gamma prior on the noise variance.
    tau_init : float, default=1000.0
        Initial noise precision.
    elbo_tol : float, default=1e-6
    pip_threshold : float, default=0.5
        Terms with inclusion probability above this are kept.
    max_iters : int, default=500
    init_threshold : float, default=0.3
        STLSQ threshold used to initialize the inclusion probabilities when
        ``w_init`` is not passed to :meth:`fit`.
    refine : bool, default=False
        Follow the fit with :func:`refine_support`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Posterior mean on the selected support, zero elsewhere.
    coef_std_ : ndarray of shape (n_features,)
    pip_ : ndarray of shape (n_features,)
    support_ : ndarray of bool
    elbo_trace_ : list of float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, slab_variance=10.0, inclusion_prior=0.1, noise_shape=1e-4, noise_rate=1e-4,
                 tau_init=1000.0, elbo_tol=1e-6, pip_threshold=0.5, max_iters=500,
                 init_threshold=0.3, refine=False):
        self.slab_variance = slab_variance
        self.inclusion_prior = inclusion_prior
        self.noise_shape = noise_shape
        self.noise_rate = noise_rate
        self.tau_init = tau_init
        self.elbo_tol = elbo_tol
        self.pip_threshold = pip_threshold
        self.max_iters = max_iters
        self.init_threshold = init_threshold
        self.refine = refine

    def hyperparams(self) -> SsHyperparams:
        return SsHyperparams(self.slab_variance, self.inclusion_prior, self.noise_shape,
                             self.noise_rate, self.tau_init, self.elbo_tol, self.pip_threshold,
                             self.max_iters)

    def fit(self, X, y, w_init=None):
        X, y = check_regression(X, y)
        self.n_features_in_ = X.shape[1]
        if w_init is None:
            w_init = stlsq_inclusion_init(X, y, StlsqConfig(self.init_threshold))
        hyper = self.hyperparams()
        self.state_, self.posterior_ = vb_fit(X, y, hyper, w_init)
        if self.refine:
            self.state_, self.posterior_ = refine_support(X, y, self.state_, hyper)
        self.coef_ = self.posterior_.coef_mean
        self.coef_std_ = self.posterior_.coef_std
        self.pip_ = self.posterior_.pip
        self.support_ = self.posterior_.support
        self.elbo_trace_ = self.state_.elbo_trace
        self.n_iter_ = self.state_.n_iter
        self.converged_ = self.state_.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_
