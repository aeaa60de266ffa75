import numpy as np
import pytest
from scipy import integrate, stats

from spdefind.exceptions import TooLarge
from spdefind.oracle import exact_ss_posterior, log_marginal_likelihood
from spdefind.ssvb import SsHyperparams, vb_fit

HYPER = SsHyperparams()


def test_marginal_likelihood_matches_quadrature():
    # integrate beta and sigma^2 numerically for K = 1 with a proper IG(2, 1) prior
    h = SsHyperparams(noise_shape=2.0, noise_rate=1.0, slab_variance=10.0)
    D = np.array([[1.0], [0.5], [-0.3], [0.8], [0.1]])
    Y = np.array([0.9, 0.4, -0.2, 0.9, 0.0])

    def integrand(beta, s2):
        lik = np.prod(stats.norm.pdf(Y, D[:, 0] * beta, np.sqrt(s2)))
        return lik * stats.norm.pdf(beta, 0, np.sqrt(s2 * h.slab_variance)) * stats.invgamma.pdf(s2, 2.0, scale=1.0)

    val, _ = integrate.dblquad(integrand, 1e-6, 20.0, -10.0, 10.0, epsabs=1e-14, epsrel=1e-10)
    assert log_marginal_likelihood(D, Y, np.array([True]), h) == pytest.approx(np.log(val), abs=1e-5)

    def empty(s2):
        return np.prod(stats.norm.pdf(Y, 0, np.sqrt(s2))) * stats.invgamma.pdf(s2, 2.0, scale=1.0)

    val0, _ = integrate.quad(empty, 1e-8, 50.0, epsabs=1e-14, epsrel=1e-10)
    assert log_marginal_likelihood(D, Y, np.array([False]), h) == pytest.approx(np.log(val0), abs=1e-5)


def test_orthogonal_column_has_pip_below_prior():
    D = np.array([[1.0], [0.0], [0.0], [0.0]])
    Y = np.array([0.0, 1.0, -0.5, 0.3])
    assert exact_ss_posterior(D, Y, HYPER)[0] < HYPER.inclusion_prior


def test_duplicate_columns_are_exchangeable(rng):
    x = rng.normal(size=40)
    pip = exact_ss_posterior(np.column_stack([x, x]), 2 * x + rng.normal(size=40), HYPER)
    assert pip[0] == pytest.approx(pip[1], rel=1e-12)


def test_strong_signal_agrees_with_vb(rng):
    D = rng.normal(size=(100, 2))
    Y = 3 * D[:, 0] + 0.1 * rng.normal(size=100)
    pip = exact_ss_posterior(D, Y, HYPER)
    assert pip[0] > 0.99 and pip[1] < 0.2
    _, post = vb_fit(D, Y, HYPER)
    np.testing.assert_array_equal(post.support, pip > 0.5)


def test_pure_noise_has_no_inclusion(rng):
    D, Y = rng.normal(size=(500, 8)), rng.normal(size=500)
    assert exact_ss_posterior(D, Y, HYPER).max() < 0.5


def test_too_large():
    with pytest.raises(TooLarge):
        exact_ss_posterior(np.ones((20, 13)), np.ones(20))
