"""Shrinkage priors for basis-coefficient blocks and their supporting distributions.

Four families are available for a block ``theta`` of ``m`` basis coefficients:

* ``PSplineK``: improper first-difference penalty ``-theta' K theta / (2 g**2)``.
* ``InverseWishart``: ``theta ~ MVN(0, Sigma)``, ``Sigma ~ InvWishart(I_m, psi)``.
* ``Horseshoe``: ``theta_p ~ N(0, (lambda_p g)**2)``, ``lambda_p ~ C+(0, 1)``.
* ``MultivariateHorseshoe``: ``theta ~ MVN(0, g**2 (lambda lambda') * Omega)`` with
  ``Omega ~ LKJ(phi)``, ``phi ~ C+(0, 1)``.

Here ``g`` is the global scale. Functions taking ``return_grad=True`` also
return analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, digamma, multigammaln

LOG_2_OVER_PI = math.log(2.0 / math.pi)
LOG_2PI = math.log(2.0 * math.pi)

FAMILIES = ("pspline", "inverse-wishart", "horseshoe", "mv-horseshoe")


@dataclass(frozen=True)
class PriorFamily:
    tag: str
    psi: float = 20.0

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise ValueError(f"unknown prior family {self.tag!r}; choose from {FAMILIES}")

    def check(self, m: int):
        if self.tag == "inverse-wishart" and not self.psi > m - 1:
            raise ValueError(f"Inverse-Wishart needs psi > m - 1 = {m - 1}, got {self.psi}")


@dataclass
class CoefficientBlock:
    """One smooth's coefficients together with its shrinkage state."""

    theta: np.ndarray
    local_scales: np.ndarray | None = None
    global_scale: float = 1.0
    corr_chol: np.ndarray | None = None
    lkj_shape: float | None = None
    cov: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.local_scales is not None and np.any(np.asarray(self.local_scales) <= 0):
            raise ValueError("local scales must be positive")
        if not self.global_scale > 0:
            raise ValueError("global scale must be positive")
        if self.lkj_shape is not None and not self.lkj_shape > 0:
            raise ValueError("LKJ shape must be positive")
        if self.corr_chol is not None:
            norms = np.linalg.norm(self.corr_chol, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-10:
                raise ValueError("corr_chol rows must have unit norm")
        if self.cov is not None:
            np.linalg.cholesky(self.cov)


# ---------------------------------------------------------------- half-Cauchy

def half_cauchy_logpdf(x, scale=1.0):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        return -np.inf
    return np.sum(LOG_2_OVER_PI - math.log(scale) - np.log1p((x / scale) ** 2))


def half_cauchy_pdf(x, scale=1.0):
    return np.exp(LOG_2_OVER_PI - math.log(scale) - np.log1p((np.asarray(x) / scale) ** 2))


def _dlog_half_cauchy(x):
    return -2.0 * x / (1.0 + x * x)


# ---------------------------------------------------------------- P-spline K

def difference_penalty(m: int) -> np.ndarray:
    """``K = D' D`` for the ``(m-1) x m`` first-difference operator ``D``."""
    D = np.diff(np.eye(m), axis=0)
    return D.T @ D


def logprior_pspline_k(theta, global_scale, K, return_grad=False):
    """Unnormalised ``-theta' K theta / (2 g^2)``; the additive constant is 0."""
    theta = np.asarray(theta, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.shape != (theta.size, theta.size):
        raise ValueError(f"penalty shape {K.shape} does not match theta of length {theta.size}")
    if not global_scale > 0:
        raise ValueError("global scale must be positive")
    if np.isinf(global_scale):
        val, g_theta, g_scale = 0.0, np.zeros_like(theta), 0.0
    else:
        Kt = K @ theta
        quad = float(theta @ Kt)
        g2 = global_scale ** 2
        val = -quad / (2.0 * g2)
        g_theta = -Kt / g2
        g_scale = quad / global_scale ** 3
    if return_grad:
        return val, {"theta": g_theta, "global_scale": g_scale}
    return val


# ---------------------------------------------------------------- Inverse-Wishart

def inverse_wishart_logpdf(cov, scale, psi):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    m = cov.shape[0]
    L = np.linalg.cholesky(cov)
    logdet_cov = 2.0 * np.sum(np.log(np.diag(L)))
    logdet_scale = np.linalg.slogdet(scale)[1]
    Linv = solve_triangular(L, np.eye(m), lower=True)
    trace = float(np.sum((Linv.T @ Linv) * scale))
    return (0.5 * psi * logdet_scale - 0.5 * psi * m * math.log(2.0)
            - multigammaln(0.5 * psi, m) - 0.5 * (psi + m + 1) * logdet_cov - 0.5 * trace)


def mvn_zero_logpdf_chol(theta, L):
    """``log MVN(theta; 0, L L')`` from a lower Cholesky factor."""
    m = theta.size
    w = solve_triangular(L, theta, lower=True)
    return -0.5 * m * LOG_2PI - np.sum(np.log(np.abs(np.diag(L)))) - 0.5 * float(w @ w)


def logprior_inverse_wishart_block(theta, cov, psi, return_grad=False):
    """``log MVN(theta; 0, cov) + log InvWishart(cov; I, psi)`` with normalising constants."""
    theta = np.asarray(theta, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    m = theta.size
    if cov.shape != (m, m):
        raise ValueError("covariance shape does not match theta")
    if not psi > m - 1:
        raise ValueError(f"psi must exceed m - 1 = {m - 1}")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not symmetric positive-definite") from exc
    val = mvn_zero_logpdf_chol(theta, L) + inverse_wishart_logpdf(cov, np.eye(m), psi)
    if not return_grad:
        return val
    inv = np.linalg.inv(cov)
    w = inv @ theta
    # symmetric-matrix gradient (derivative w.r.t. each entry treating cov as free)
    g_cov = 0.5 * np.outer(w, w) - 0.5 * inv - 0.5 * (psi + m + 1) * inv + 0.5 * inv @ inv
    return val, {"theta": -w, "cov": g_cov}


def sample_inverse_wishart(scale, psi, rng):
    """Draw ``Sigma ~ InvWishart(scale, psi)`` by inverting a Bartlett-factor Wishart draw."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    m = scale.shape[0]
    if not psi > m - 1:
        raise ValueError(f"psi must exceed m - 1 = {m - 1}")
    # Sigma^{-1} ~ Wishart(scale^{-1}, psi)
    C = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((m, m))
    A[np.diag_indices(m)] = np.sqrt(rng.chisquare(psi - np.arange(m)))
    il = np.tril_indices(m, -1)
    A[il] = rng.standard_normal(len(il[0]))
    CA = C @ A
    # inv(CA CA') = inv(CA)' inv(CA)
    CAinv = solve_triangular(CA, np.eye(m), lower=True)
    out = CAinv.T @ CAinv
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------- Horseshoe

def logprior_horseshoe(theta, local_scales, global_scale, return_grad=False):
    """Normal terms plus ``C+(0,1)`` terms for each local scale.

    The global scale's own half-Cauchy term is left to the caller.
    """
    theta = np.asarray(theta, dtype=float)
    lam = np.asarray(local_scales, dtype=float)
    if np.any(lam <= 0) or not global_scale > 0:
        raise ValueError("horseshoe scales must be positive")
    sd = lam * global_scale
    z = theta / sd
    val = float(np.sum(-0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z)
                + np.sum(LOG_2_OVER_PI - np.log1p(lam * lam)))
    if not return_grad:
        return val
    g_theta = -z / sd
    g_lam = (z * z - 1.0) / lam + _dlog_half_cauchy(lam)
    g_global = float(np.sum(z * z - 1.0)) / global_scale
    return val, {"theta": g_theta, "local_scales": g_lam, "global_scale": g_global}


# ---------------------------------------------------------------- LKJ

def lkj_log_normaliser(m: int, shape: float) -> float:
    """``log c_m(shape)`` with ``LKJ(Omega) = det(Omega)**(shape-1) / c_m``."""
    k = np.arange(1, m)
    b = shape + 0.5 * (m - k - 1)
    return float(np.sum((2.0 * shape - 2.0 + m - k) * (m - k) * math.log(2.0)
                        + (m - k) * betaln(b, b)))


def lkj_log_normaliser_dshape(m: int, shape: float) -> float:
    k = np.arange(1, m)
    b = shape + 0.5 * (m - k - 1)
    return float(np.sum(2.0 * (m - k) * math.log(2.0)
                        + (m - k) * (2.0 * digamma(b) - 2.0 * digamma(2.0 * b))))


def lkj_chol_logpdf(corr_chol, shape):
    """Log LKJ density of ``Omega = L L'`` evaluated through its Cholesky factor."""
    L = np.asarray(corr_chol, dtype=float)
    m = L.shape[0]
    d = np.diag(L)
    if np.any(d <= 1e-12):
        raise ValueError("singular correlation Cholesky factor")
    return 2.0 * (shape - 1.0) * float(np.sum(np.log(d))) - lkj_log_normaliser(m, shape)


def cpc_beta_params(m: int, shape: float) -> np.ndarray:
    """Symmetric-Beta parameter for each canonical partial correlation, lower-triangle order.

    The CPC in row ``i``, column ``j`` conditions on ``j`` variables and is
    ``2 * Beta(b, b) - 1`` with ``b = shape + (m - 2 - j) / 2``.
    """
    il = np.tril_indices(m, -1)
    return shape + 0.5 * (m - 2 - il[1])


def cpc_to_chol(cpc, m):
    """Lower Cholesky factor of a correlation matrix from its canonical partial correlations."""
    z = np.zeros((m, m))
    z[np.tril_indices(m, -1)] = cpc
    L = np.zeros((m, m))
    L[0, 0] = 1.0
    for i in range(1, m):
        rem = 1.0
        for j in range(i):
            L[i, j] = z[i, j] * math.sqrt(rem)
            rem -= L[i, j] ** 2
        L[i, i] = math.sqrt(max(rem, 0.0))
    return L


def sample_lkj_chol(m: int, shape: float, rng) -> np.ndarray:
    """Vine construction: independent symmetric-Beta partial correlations mapped to ``L``."""
    if not shape > 0:
        raise ValueError("LKJ shape must be positive")
    if m < 2:
        raise ValueError("LKJ needs m >= 2")
    b = cpc_beta_params(m, shape)
    cpc = 2.0 * rng.beta(b, b) - 1.0
    return cpc_to_chol(cpc, m)


def logprior_mv_horseshoe(theta, local_scales, global_scale, corr_chol, lkj_shape,
                          return_grad=False):
    """Multivariate Horseshoe block density.

    ``log MVN(theta; 0, S L L' S)`` with ``S = diag(global * local)``, evaluated
    through ``S L`` without forming the covariance, plus ``C+`` terms for the
    local scales and the LKJ shape, plus the LKJ density of ``L L'``.
    """
    theta = np.asarray(theta, dtype=float)
    lam = np.asarray(local_scales, dtype=float)
    L = np.asarray(corr_chol, dtype=float)
    m = theta.size
    if np.any(lam <= 0) or not global_scale > 0 or not lkj_shape > 0:
        raise ValueError("scales and LKJ shape must be positive")
    if np.any(np.diag(L) <= 1e-12):
        raise ValueError("singular correlation Cholesky factor")
    s = lam * global_scale
    # theta = S L z  =>  z = L^{-1} (theta / s)
    u = theta / s
    z = solve_triangular(L, u, lower=True)
    val = (-0.5 * m * LOG_2PI - float(np.sum(np.log(s))) - float(np.sum(np.log(np.diag(L))))
           - 0.5 * float(z @ z))
    val += float(np.sum(LOG_2_OVER_PI - np.log1p(lam * lam)))
    val += lkj_chol_logpdf(L, lkj_shape)
    val += LOG_2_OVER_PI - math.log1p(lkj_shape ** 2)
    if not return_grad:
        return val
    # d/du of -0.5 |L^{-1} u|^2 = -(L L')^{-1} u
    w = solve_triangular(L.T, z, lower=False)
    g_theta = -w / s
    g_s = (w * u - 1.0) / s
    g_lam = g_s * global_scale + _dlog_half_cauchy(lam)
    g_global = float(np.sum(g_s * lam))
    g_shape = (2.0 * float(np.sum(np.log(np.diag(L)))) - lkj_log_normaliser_dshape(m, lkj_shape)
               + _dlog_half_cauchy(lkj_shape))
    return val, {"theta": g_theta, "local_scales": g_lam, "global_scale": g_global,
                 "lkj_shape": g_shape}


# ---------------------------------------------------------------- shrinkage analytics

def shrinkage_kappa(global_scale, local_scale):
    """``1 / (1 + g^2 lambda^2)``: 0 means no shrinkage, 1 total shrinkage."""
    g = np.asarray(global_scale, dtype=float)
    lam = np.asarray(local_scale, dtype=float)
    if np.any(g < 0) or np.any(lam < 0):
        raise ValueError("scales must be non-negative")
    out = 1.0 / (1.0 + (g * lam) ** 2)
    return float(out) if out.ndim == 0 else out


def covariate_shrinkage_kappa(cov):
    """Entrywise ``1 / (1 + |cov_pq|)``."""
    return 1.0 / (1.0 + np.abs(np.asarray(cov, dtype=float)))


def sample_horseshoe_kappa(n: int, rng, global_scale: float = 1.0) -> np.ndarray:
    lam = np.abs(rng.standard_cauchy(n))
    return shrinkage_kappa(global_scale, lam)


def sample_inverse_wishart_kappa(n: int, m: int, psi: float, rng) -> np.ndarray:
    """Covariate-shrinkage coefficients of ``n`` prior covariance draws, shape ``(n, m, m)``."""
    return np.stack([covariate_shrinkage_kappa(sample_inverse_wishart(np.eye(m), psi, rng))
                     for _ in range(n)])
