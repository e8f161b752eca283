"""Independent reference computations shared by the test modules.

Nothing here imports the package's likelihood or recursion code; the
densities come from scipy.stats.
"""

import math

import numpy as np
from scipy import stats


def fd_gradient(f, x, h=1e-5):
    """Five-point central differences."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def fd_relative_error(f, x, grad, steps=(1e-5, 1e-6, 1e-4)):
    """Smallest norm-wise relative error of ``grad`` against five-point differences over ``steps``.

    Near the overflow guard the log posterior is steep enough that no single
    step suits every state; a wrong analytic gradient matches at none of them.
    """
    errs = []
    for h in steps:
        fd = fd_gradient(f, x, h)
        if np.all(np.isfinite(fd)):
            errs.append(relative_error(grad, fd))
    return min(errs) if errs else float("inf")


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def gamma_logpdf_mv(y, mu, sigma2):
    shape = mu ** 2 / sigma2
    return stats.gamma.logpdf(y, shape, scale=sigma2 / mu)


def normal_logpdf(x, sd):
    return float(np.sum(stats.norm.logpdf(x, scale=sd)))


def glm_log_posterior(y, Xz, mu0, beta, log_dispersion, sd=10.0):
    """Gamma GLM with log link, constant shape ``exp(-log_dispersion)``.

    Priors: normal on the intercept and standardised slopes, half-Cauchy on
    the dispersion with the log-scale Jacobian.
    """
    mu = np.exp(mu0 + Xz @ beta)
    shape = math.exp(-log_dispersion)
    ll = np.sum(stats.gamma.logpdf(y, shape, scale=mu / shape))
    d = math.exp(log_dispersion)
    lp_disp = stats.halfcauchy.logpdf(d) + log_dispersion
    return ll + normal_logpdf(mu0, sd) + normal_logpdf(beta, sd) + lp_disp


def static_mv_log_posterior(y, mu, tau0, sd=10.0):
    """Gamma likelihood with known mean and constant variance ``exp(tau0)``."""
    return float(np.sum(gamma_logpdf_mv(y, mu, math.exp(tau0)))) + normal_logpdf(tau0, sd)


def exact_loo_normal(y, sigma, prior_sd):
    """Exact leave-one-out log predictive densities for a normal mean with known noise."""
    n = y.size
    out = np.empty(n)
    for i in range(n):
        rest = np.delete(y, i)
        prec = 1 / prior_sd ** 2 + (n - 1) / sigma ** 2
        m = (rest.sum() / sigma ** 2) / prec
        out[i] = stats.norm.logpdf(y[i], m, math.sqrt(sigma ** 2 + 1 / prec))
    return out
