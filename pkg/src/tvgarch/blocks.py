"""Unconstrained parameterisations of coefficient blocks for gradient-based sampling.

Every block maps an unconstrained vector ``u`` to basis coefficients ``theta``
and returns the log prior density of ``u`` (prior of the original parameters
plus the log-Jacobian of the transform). ``backward`` pulls a likelihood
gradient with respect to ``theta`` back onto ``u`` and adds the prior gradient.

Scales live on the log scale. Horseshoe-type blocks are non-centred
(``theta = g * lambda * (L z)`` with ``z`` standard normal), and the LKJ
factor is built from canonical partial correlations ``tanh(w)``. Each ``w``
is stored multiplied by ``sqrt(2 b + 1)`` (``b`` the Beta shape of that
partial correlation, whose ``atanh`` has standard deviation close to
``1 / sqrt(2 b)`` for large ``b``), which removes the funnel between a
large LKJ shape and near-zero correlations.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import multigammaln

from tvgarch.kernels import digamma
from tvgarch.priors import (
    LOG_2_OVER_PI,
    LOG_2PI,
    CoefficientBlock,
    PriorFamily,
    cpc_beta_params,
    difference_penalty,
)

LOG2 = math.log(2.0)


def _hc_logp_log(s):
    """``log C+(exp(s); 0, 1) + s`` and its derivative in ``s``."""
    val = LOG_2_OVER_PI - np.logaddexp(0.0, 2.0 * s) + s
    return val, -np.tanh(s)


@numba.njit(cache=True)
def _log1m_tanh2(w):
    """Stable ``log(1 - tanh(w)^2)``."""
    aw = abs(w)
    return 2.0 * (0.6931471805599453 - aw - math.log1p(math.exp(-2.0 * aw)))


@numba.njit(cache=True)
def _cpc_chol_forward(w, m):
    """Cholesky factor from unconstrained partial correlations ``w`` (CPC ``tanh(w)``).

    Row remainders ``1 - sum_j L_ij^2`` are accumulated on the log scale so
    saturated correlations never produce a zero or negative remainder.
    Returns the factor and the square-rooted remainders ``sr[i, j]`` seen by
    each entry.
    """
    L = np.zeros((m, m))
    sr = np.zeros((m, m))
    L[0, 0] = 1.0
    k = 0
    for i in range(1, m):
        logrem = 0.0
        for j in range(i):
            sr[i, j] = math.exp(0.5 * logrem)
            L[i, j] = math.tanh(w[k]) * sr[i, j]
            logrem += _log1m_tanh2(w[k])
            k += 1
        L[i, i] = math.exp(0.5 * logrem)
        sr[i, i] = L[i, i]
    return L, sr


@numba.njit(cache=True)
def _cpc_chol_backward(w, L, sr, gL, m):
    """Gradient w.r.t. ``w`` given the gradient ``gL`` w.r.t. the factor."""
    g = np.zeros(w.shape[0])
    k_row = 0
    for i in range(1, m):
        # sum of gL * L over entries right of column j; each scales with sqrt(1 - c_j^2)
        after = gL[i, i] * L[i, i]
        for j in range(i - 1, -1, -1):
            k = k_row + j
            c = math.tanh(w[k])
            g[k] = gL[i, j] * (1.0 - c * c) * sr[i, j] - c * after
            after += gL[i, j] * L[i, j]
        k_row += i
    return g


@numba.njit(cache=True)
def _corr_forward(wt, phi, offset, m):
    """Factor, log density and explicit shape derivative of the standardised CPCs."""
    k = wt.shape[0]
    b = phi + offset
    scale = 1.0 / np.sqrt(2.0 * b + 1.0)
    w = scale * wt
    L, sr = _cpc_chol_forward(w, m)
    lp = 0.0
    dlp_db = np.empty(k)
    for q in range(k):
        bq = b[q]
        l1m = _log1m_tanh2(w[q])
        lbeta = 2.0 * math.lgamma(bq) - math.lgamma(2.0 * bq)
        lp += bq * l1m - (2.0 * bq - 1.0) * 0.6931471805599453 - lbeta + math.log(scale[q])
        # d log scale / db = -scale^2
        dlp_db[q] = (l1m - 2.0 * 0.6931471805599453 - 2.0 * (digamma(bq) - digamma(2.0 * bq))
                     - scale[q] * scale[q])
    return w, b, scale, L, sr, lp, dlp_db


@numba.njit(cache=True)
def _corr_backward(w, b, scale, L, sr, gL, dlp_db, m):
    """Gradients w.r.t. the standardised CPCs and the summed shape derivative."""
    g_w = _cpc_chol_backward(w, L, sr, gL, m)
    k = w.shape[0]
    g_wt = np.empty(k)
    d_b = 0.0
    for q in range(k):
        gq = g_w[q] - 2.0 * b[q] * math.tanh(w[q])
        g_wt[q] = gq * scale[q]
        d_b += dlp_db[q] - gq * w[q] * scale[q] * scale[q]
    return g_wt, d_b


class Block:
    """Base class; subclasses define ``dim``, ``names``, ``forward`` and ``backward``."""

    family: str

    def __init__(self, m: int, label: str):
        self.m = m
        self.label = label

    def init(self, rng, jitter=0.1):
        return jitter * rng.uniform(-1, 1, size=self.dim)

    def theta(self, u):
        return self.forward(u)[0]


class HorseshoeBlock(Block):
    family = "horseshoe"

    def __init__(self, m, label):
        super().__init__(m, label)
        self.dim = 2 * m + 1

    def names(self):
        p = self.label
        return ([f"{p}_z[{i}]" for i in range(self.m)]
                + [f"{p}_loglambda[{i}]" for i in range(self.m)] + [f"{p}_logglobal"])

    def forward(self, u):
        m = self.m
        z, s, sg = u[:m], u[m:2 * m], u[2 * m]
        lam, g = np.exp(s), math.exp(sg)
        theta = g * lam * z
        hc_l, dhc_l = _hc_logp_log(s)
        hc_g, dhc_g = _hc_logp_log(sg)
        lp = -0.5 * m * LOG_2PI - 0.5 * float(z @ z) + float(hc_l.sum()) + float(hc_g)
        return theta, lp, (z, lam, g, theta, dhc_l, dhc_g)

    def backward(self, cache, g_theta):
        z, lam, g, theta, dhc_l, dhc_g = cache
        m = self.m
        out = np.empty(self.dim)
        out[:m] = -z + g * lam * g_theta
        gt = g_theta * theta
        out[m:2 * m] = dhc_l + gt
        out[2 * m] = dhc_g + gt.sum()
        return out

    def coefficient_block(self, u):
        theta, _, (z, lam, g, *_rest) = self.forward(u)
        return CoefficientBlock(theta=theta, local_scales=lam, global_scale=g)


class MVHorseshoeBlock(Block):
    family = "mv-horseshoe"

    def __init__(self, m, label):
        super().__init__(m, label)
        self.ncpc = m * (m - 1) // 2
        self.dim = 2 * m + 1 + self.ncpc + 1
        self._il = np.tril_indices(m, -1)
        # Beta parameter of each CPC is shape + offset
        self._offset = cpc_beta_params(m, 0.0)

    def names(self):
        p = self.label
        return ([f"{p}_z[{i}]" for i in range(self.m)]
                + [f"{p}_loglambda[{i}]" for i in range(self.m)] + [f"{p}_logglobal"]
                + [f"{p}_cpc_std[{i},{j}]" for i, j in zip(*self._il)] + [f"{p}_logphi"])

    def forward(self, u):
        m, k = self.m, self.ncpc
        z, s, sg = u[:m], u[m:2 * m], u[2 * m]
        wt = u[2 * m + 1:2 * m + 1 + k]
        sphi = u[-1]
        lam, g, phi = np.exp(s), math.exp(sg), math.exp(sphi)
        w, b, scale, L, sr, lp_corr, dlp_db = _corr_forward(wt, phi, self._offset, m)
        x = L @ z
        theta = g * lam * x
        hc_l, dhc_l = _hc_logp_log(s)
        hc_g, dhc_g = _hc_logp_log(sg)
        hc_p, dhc_p = _hc_logp_log(sphi)
        lp = (-0.5 * m * LOG_2PI - 0.5 * float(z @ z) + float(hc_l.sum()) + float(hc_g)
              + lp_corr + float(hc_p))
        cache = (z, lam, g, phi, L, sr, theta, b, dhc_l, dhc_g, dhc_p, w, scale, dlp_db)
        return theta, lp, cache

    def backward(self, cache, g_theta):
        z, lam, g, phi, L, sr, theta, b, dhc_l, dhc_g, dhc_p, w, scale, dlp_db = cache
        m, k = self.m, self.ncpc
        out = np.empty(self.dim)
        g_x = g * lam * g_theta
        gL = np.tril(np.outer(g_x, z))
        out[:m] = -z + L.T @ g_x
        gt = g_theta * theta
        out[m:2 * m] = dhc_l + gt
        out[2 * m] = dhc_g + gt.sum()
        g_wt, d_b = _corr_backward(w, b, scale, L, sr, gL, dlp_db, m)
        out[2 * m + 1:2 * m + 1 + k] = g_wt
        out[-1] = d_b * phi + dhc_p
        return out

    def coefficient_block(self, u):
        theta, _, c = self.forward(u)
        z, lam, g, phi, L = c[:5]
        return CoefficientBlock(theta=theta, local_scales=lam, global_scale=g, corr_chol=L,
                                lkj_shape=phi)


class InverseWishartBlock(Block):
    family = "inverse-wishart"

    def __init__(self, m, label, psi=20.0):
        super().__init__(m, label)
        PriorFamily("inverse-wishart", psi).check(m)
        self.psi = float(psi)
        self.noff = m * (m - 1) // 2
        self.dim = 2 * m + self.noff
        self._il = np.tril_indices(m, -1)
        i = np.arange(m)
        self._jac_pow = (m - i + 1.0)
        self._const = (m * LOG2 - 0.5 * self.psi * m * LOG2 - multigammaln(0.5 * self.psi, m)
                       - 0.5 * m * LOG_2PI)

    def names(self):
        p = self.label
        return ([f"{p}_z[{i}]" for i in range(self.m)]
                + [f"{p}_logcholdiag[{i}]" for i in range(self.m)]
                + [f"{p}_choloff[{i},{j}]" for i, j in zip(*self._il)])

    def init(self, rng, jitter=0.1):
        u = jitter * rng.uniform(-1, 1, size=self.dim)
        # start near the prior mean scale I / (psi - m - 1) when it exists
        u[self.m:2 * self.m] += -0.5 * math.log(max(self.psi - self.m - 1.0, 1.0))
        return u

    def _chol(self, u):
        m = self.m
        L = np.zeros((m, m))
        d = u[m:2 * m]
        L[np.diag_indices(m)] = np.exp(d)
        L[self._il] = u[2 * m:]
        return L, d

    def forward(self, u):
        m = self.m
        z = u[:m]
        L, d = self._chol(u)
        theta = L @ z
        Linv = solve_triangular(L, np.eye(m), lower=True)
        tr = float(np.sum(Linv * Linv))
        lp = (self._const - 0.5 * float(z @ z) - (self.psi + m + 1) * float(d.sum())
              - 0.5 * tr + float(self._jac_pow @ d))
        return theta, lp, (z, L, Linv, theta)

    def backward(self, cache, g_theta):
        z, L, Linv, theta = cache
        m = self.m
        out = np.empty(self.dim)
        out[:m] = -z + L.T @ g_theta
        # d/dL of -tr((LL')^{-1})/2 is L^{-T} L^{-1} L^{-T}
        A = Linv.T @ Linv
        gL = np.tril(np.outer(g_theta, z) + A @ Linv.T)
        dg = np.diag(gL) * np.diag(L) - (self.psi + m + 1) + self._jac_pow
        out[m:2 * m] = dg
        out[2 * m:] = gL[self._il]
        return out

    def coefficient_block(self, u):
        theta, _, (z, L, *_r) = self.forward(u)
        return CoefficientBlock(theta=theta, cov=L @ L.T)


class PSplineBlock(Block):
    """First-difference penalty with a sampled global scale.

    The log density of ``theta`` carries the ``-(m-1) log g`` term of the
    rank-``m-1`` penalty so the global scale has a proper conditional.
    """

    family = "pspline"

    def __init__(self, m, label):
        super().__init__(m, label)
        self.dim = m + 1
        self.K = difference_penalty(m)

    def names(self):
        return [f"{self.label}[{i}]" for i in range(self.m)] + [f"{self.label}_logglobal"]

    def forward(self, u):
        m = self.m
        theta, sg = u[:m], u[m]
        g2 = math.exp(2.0 * sg)
        Kt = self.K @ theta
        quad = float(theta @ Kt)
        hc_g, dhc_g = _hc_logp_log(sg)
        lp = -quad / (2.0 * g2) - (m - 1) * sg + float(hc_g)
        return theta.copy(), lp, (Kt, quad, g2, dhc_g)

    def backward(self, cache, g_theta):
        Kt, quad, g2, dhc_g = cache
        out = np.empty(self.dim)
        out[:self.m] = g_theta - Kt / g2
        out[self.m] = quad / g2 - (self.m - 1) + dhc_g
        return out

    def coefficient_block(self, u):
        return CoefficientBlock(theta=u[:self.m].copy(), global_scale=math.exp(u[self.m]))


def make_block(family: PriorFamily | str, m: int, label: str) -> Block:
    if isinstance(family, str):
        family = PriorFamily(family)
    if family.tag == "horseshoe":
        return HorseshoeBlock(m, label)
    if family.tag == "mv-horseshoe":
        return MVHorseshoeBlock(m, label)
    if family.tag == "inverse-wishart":
        return InverseWishartBlock(m, label, family.psi)
    return PSplineBlock(m, label)
