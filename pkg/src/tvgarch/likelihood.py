"""Gamma distribution parameterised by its mean and variance.

With mean ``mu`` and variance ``sigma2`` the usual shape/rate pair is
``shape = mu**2 / sigma2`` and ``rate = mu / sigma2``; the dispersion is
``1 / shape``. Functions broadcast over numpy arrays.
"""

from __future__ import annotations

import numpy as np
from scipy.special import digamma, gammaln


def _check_positive(**kw):
    for name, val in kw.items():
        arr = np.asarray(val, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError(f"{name} must be finite and > 0")


def gamma_params_from_mv(mu, sigma2):
    """Return ``(shape, rate)`` for the Gamma with mean ``mu`` and variance ``sigma2``."""
    _check_positive(mu=mu, sigma2=sigma2)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    shape = mu * mu / sigma2
    rate = mu / sigma2
    if shape.ndim == 0:
        return float(shape), float(rate)
    return shape, rate


def _logpdf_shape_rate(y, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(y) - rate * y


def gamma_mv_logpdf(y, mu, sigma2):
    """Log density of ``y`` under Gamma(mean=mu, variance=sigma2).

    Zero or negative ``y`` is rejected: depending on the shape the density at
    zero is either zero or unbounded.
    """
    _check_positive(y=y, mu=mu, sigma2=sigma2)
    y = np.asarray(y, dtype=float)
    shape, rate = gamma_params_from_mv(mu, sigma2)
    out = _logpdf_shape_rate(y, shape, rate)
    return float(out) if np.ndim(out) == 0 else out


def gamma_mv_sample(mu, sigma2, rng, size=None):
    _check_positive(mu=mu, sigma2=sigma2)
    shape, rate = gamma_params_from_mv(mu, sigma2)
    return rng.gamma(shape, 1.0 / np.asarray(rate), size=size)


def gamma_mv_grad(y, mu, sigma2):
    """Partial derivatives of :func:`gamma_mv_logpdf` w.r.t. ``mu`` and ``sigma2``."""
    _check_positive(y=y, mu=mu, sigma2=sigma2)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    shape = mu * mu / sigma2
    rate = mu / sigma2
    # d logp / d shape and d logp / d rate
    d_shape = np.log(rate) - digamma(shape) + np.log(y)
    d_rate = shape / rate - y
    d_mu = d_shape * (2.0 * mu / sigma2) + d_rate / sigma2
    d_sigma2 = -(d_shape * shape + d_rate * rate) / sigma2
    if d_mu.ndim == 0:
        return float(d_mu), float(d_sigma2)
    return d_mu, d_sigma2
