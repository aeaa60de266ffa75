"""One-call discovery estimator over an ensemble tensor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_field_array
from .kramers_moyal import km_targets
from .library import _average_terms, generate_terms
from .simulate import Boundary, EnsembleField, Grid1d, TimeSpec
from .ssvb import SsHyperparams, refine_support, vb_fit
from .stlsq import StlsqConfig, stlsq


class SPDEDiscovery(BaseEstimator):
    """Discover drift and squared diffusion of an SPDE from an ensemble.

    ``fit`` takes ``X`` of shape ``(N_s, N_t, N_x)``: builds the averaged
    dictionary, forms the Kramers-Moyal targets, and runs STLSQ-initialized
    spike-and-slab VB on each.

    Parameters
    ----------
    dt : float
        Sampling interval of the time axis.
    length : float, default=20.0
    boundary : {"periodic", "dirichlet"}, default="periodic"
    poly_max, deriv_max : int, default=6, 5
    include_products : bool, default=True
    stlsq_threshold : float, default=0.3
    refine : bool, default=True
        Run the ELBO-guided support search after each VB fit.
    slab_variance, inclusion_prior, noise_shape, noise_rate, tau_init, elbo_tol,
    pip_threshold, max_iters :
        Spike-and-slab hyperparameters.

    Attributes
    ----------
    feature_names_ : list of str
    drift_coef_, diffusion_coef_ : ndarray of shape (n_terms,)
    drift_std_, diffusion_std_ : ndarray of shape (n_terms,)
    drift_pip_, diffusion_pip_ : ndarray of shape (n_terms,)
    drift_support_, diffusion_support_ : ndarray of bool
    """

    def __init__(self, dt=0.0025, length=20.0, boundary="periodic", poly_max=6, deriv_max=5,
                 include_products=True, stlsq_threshold=0.3, refine=True, slab_variance=10.0,
                 inclusion_prior=0.1, noise_shape=1e-4, noise_rate=1e-4, tau_init=1000.0,
                 elbo_tol=1e-6, pip_threshold=0.5, max_iters=500):
        self.dt = dt
        self.length = length
        self.boundary = boundary
        self.poly_max = poly_max
        self.deriv_max = deriv_max
        self.include_products = include_products
        self.stlsq_threshold = stlsq_threshold
        self.refine = refine
        self.slab_variance = slab_variance
        self.inclusion_prior = inclusion_prior
        self.noise_shape = noise_shape
        self.noise_rate = noise_rate
        self.tau_init = tau_init
        self.elbo_tol = elbo_tol
        self.pip_threshold = pip_threshold
        self.max_iters = max_iters

    def _hyper(self):
        return SsHyperparams(self.slab_variance, self.inclusion_prior, self.noise_shape,
                             self.noise_rate, self.tau_init, self.elbo_tol, self.pip_threshold,
                             self.max_iters)

    def fit(self, X, y=None):
        X = check_field_array(X)
        ns, nt, nx = X.shape
        grid = Grid1d(self.length, nx, Boundary(self.boundary))
        data = EnsembleField(X, grid, TimeSpec((nt - 1) * self.dt, self.dt))
        terms = generate_terms(self.poly_max, self.deriv_max, self.include_products)
        D = _average_terms(X, grid, terms)
        targets = km_targets(data)
        hyper = self._hyper()
        self.terms_ = terms
        self.feature_names_ = [t.name for t in terms]
        self.n_nodes_ = nx
        for component, y_k in (("drift", targets.y_drift), ("diffusion", targets.y_diff)):
            _, active = stlsq(D, y_k, StlsqConfig(self.stlsq_threshold))
            state, post = vb_fit(D, y_k, hyper, np.where(active, 0.99, 0.01), terms)
            if self.refine:
                state, post = refine_support(D, y_k, state, hyper, terms)
            setattr(self, f"{component}_coef_", post.coef_mean)
            setattr(self, f"{component}_std_", post.coef_std)
            setattr(self, f"{component}_pip_", post.pip)
            setattr(self, f"{component}_support_", post.support)
            setattr(self, f"{component}_elbo_", post.elbo_final)
        return self

    def predict(self, X):
        """Drift and squared-diffusion rates at every (time, node) row of ``X``'s averaged dictionary."""
        check_is_fitted(self, "drift_coef_")
        X = check_field_array(X)
        if X.shape[2] != self.n_nodes_:
            raise ValueError(f"X has {X.shape[2]} nodes, estimator was fitted on {self.n_nodes_}")
        grid = Grid1d(self.length, X.shape[2], Boundary(self.boundary))
        D = _average_terms(X, grid, self.terms_)
        return D @ self.drift_coef_, D @ self.diffusion_coef_

    def equation(self, digits: int = 4) -> str:
        check_is_fitted(self, "drift_coef_")

        def side(coef, support):
            parts = [f"{coef[k]:+.{digits}f}*{self.feature_names_[k]}" for k in np.flatnonzero(support)]
            return " ".join(parts) if parts else "0"

        return (f"du = ({side(self.drift_coef_, self.drift_support_)}) dt"
                f" + sqrt({side(self.diffusion_coef_, self.diffusion_support_)}) dW")
