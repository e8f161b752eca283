import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from tvgarch.likelihood import gamma_mv_grad, gamma_mv_logpdf, gamma_mv_sample, gamma_params_from_mv

PAIRS = [(20.0855, 9.4877), (1.0, 4.0), (0.3, 0.01)]


def test_shape_rate_known_values():
    assert gamma_params_from_mv(2.0, 4.0) == (1.0, 0.5)
    assert gamma_params_from_mv(3.0, 3.0) == (3.0, 1.0)


@pytest.mark.parametrize("mu,s2", PAIRS)
def test_round_trip(mu, s2):
    a, r = gamma_params_from_mv(mu, s2)
    assert_allclose(a / r, mu, rtol=1e-12)
    assert_allclose(mu * mu / a, s2, rtol=1e-12)


@pytest.mark.parametrize("mu,s2", PAIRS)
def test_matches_scipy(mu, s2):
    y = np.linspace(0.2, 3.0, 7) * mu
    a = mu * mu / s2
    assert_allclose(gamma_mv_logpdf(y, mu, s2), stats.gamma.logpdf(y, a, scale=s2 / mu), rtol=1e-10)


@pytest.mark.parametrize("mu,s2", PAIRS)
def test_integrates_to_one(mu, s2):
    total, _ = integrate.quad(lambda y: np.exp(gamma_mv_logpdf(y, mu, s2)), 0, np.inf,
                              epsabs=1e-12, epsrel=1e-10, limit=500)
    assert abs(total - 1.0) < 1e-6


@pytest.mark.parametrize("mu,s2", PAIRS)
def test_sample_moments(mu, s2):
    rng = np.random.default_rng(7)
    y = gamma_mv_sample(mu, s2, rng, size=100_000)
    n = y.size
    assert abs(y.mean() - mu) < 3 * np.sqrt(s2 / n)
    # var of the sample variance for a Gamma: (mu4 - s2^2) / n, mu4 = 3 s2^2 + 6 s2^3 / mu^2
    mu4 = 3 * s2 ** 2 + 6 * s2 ** 3 / mu ** 2
    assert abs(y.var(ddof=1) - s2) < 3 * np.sqrt((mu4 - s2 ** 2) / n)


def test_rejects_nonpositive():
    for args in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0), (np.nan, 1.0, 1.0)]:
        with pytest.raises(ValueError):
            gamma_mv_logpdf(*args)


def test_gradient_matches_finite_differences():
    y, mu, s2 = 3.7, 2.9, 1.6
    d_mu, d_s2 = gamma_mv_grad(y, mu, s2)
    h = 1e-6
    fd_mu = (gamma_mv_logpdf(y, mu + h, s2) - gamma_mv_logpdf(y, mu - h, s2)) / (2 * h)
    fd_s2 = (gamma_mv_logpdf(y, mu, s2 + h) - gamma_mv_logpdf(y, mu, s2 - h)) / (2 * h)
    assert_allclose([d_mu, d_s2], [fd_mu, fd_s2], rtol=1e-7)
