"""Compiled likelihood kernels with hand-written reverse passes.

Both kernels walk the series in time order, so they are plain loops compiled
with numba. Integer mode codes are used because numba dislikes strings.
"""

from __future__ import annotations

import math

import numba
import numpy as np

MEAN_LAG_MODES = {"log": 0, "raw": 1}
VAR_LAG_MODES = {"logdisp": 0, "centred": 1, "log": 2, "raw": 3, "logcv": 4}
ARCH_MODES = {"abs": 0, "sq": 1, "raw_sq": 2, "abs_centred": 3}
# E|z| for a standard normal z; centres the absolute shock
ABS_MEAN = math.sqrt(2.0 / math.pi)


@numba.njit(cache=True)
def digamma(x):
    r = 0.0
    while x < 6.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    return r + math.log(x) - 0.5 / x - f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (
        1.0 / 240 - f / 132))))


@numba.njit(cache=True)
def mean_forward(base, at, y, obs, start, centre, lag_mode, cap):
    """Linear predictor of the TV-AR(1) mean.

    A missing lagged response is replaced by the model mean at that time, so
    imputation chains through consecutive gaps. Returns ``(eta, lag, ok)``.
    """
    n = base.shape[0]
    eta = np.empty(n)
    lag = np.zeros(n)
    for t in range(n):
        if start[t]:
            lv = 0.0
        else:
            p = t - 1
            if obs[p]:
                lv = math.log(y[p]) - centre[t] if lag_mode == 0 else y[p]
            else:
                lv = eta[p] - centre[t] if lag_mode == 0 else math.exp(eta[p])
        lag[t] = lv
        e = base[t] + at[t] * lv
        if not (abs(e) <= cap):
            return eta, lag, False
        eta[t] = e
    return eta, lag, True


@numba.njit(cache=True)
def step1_kernel(base, at, y, obs, start, centre, lag_mode, cap, alpha, psi_alpha):
    """Gamma log likelihood with constant per-series shape ``alpha``.

    Returns ``(ll, ll_pointwise, eta, g_base, g_at, g_logdisp, ok)`` where
    ``g_logdisp`` is per observation (summed per series by the caller) and is
    the derivative w.r.t. ``log(1/alpha)``.
    """
    n = base.shape[0]
    eta, lag, ok = mean_forward(base, at, y, obs, start, centre, lag_mode, cap)
    llp = np.zeros(n)
    g_eta = np.zeros(n)
    g_base = np.zeros(n)
    g_at = np.zeros(n)
    g_ld = np.zeros(n)
    if not ok:
        return -np.inf, llp, eta, g_base, g_at, g_ld, False
    ll = 0.0
    for t in range(n):
        if obs[t]:
            a = alpha[t]
            ly = math.log(y[t])
            r = y[t] * math.exp(-eta[t])
            llp[t] = a * math.log(a) - a * eta[t] - math.lgamma(a) + (a - 1.0) * ly - a * r
            ll += llp[t]
            g_eta[t] = a * (r - 1.0)
            g_ld[t] = -a * (math.log(a) + 1.0 - eta[t] - psi_alpha[t] + ly - r)
    for t in range(n - 1, -1, -1):
        g = g_eta[t]
        g_base[t] = g
        g_at[t] = g * lag[t]
        if not start[t] and not obs[t - 1]:
            d = 1.0 if lag_mode == 0 else math.exp(eta[t - 1])
            g_eta[t - 1] += g * at[t] * d
    return ll, llp, eta, g_base, g_at, g_ld, True


@numba.njit(cache=True)
def variance_forward(tau, b, c, eps, logmu, start, arch_mode, var_mode, cap):
    """Log-variance recursion ``v_t = tau_t + b_t * shock_{t-1} + c_t * lagvar_{t-1}``."""
    n = tau.shape[0]
    v = np.empty(n)
    sh = np.zeros(n)
    hv = np.zeros(n)
    for t in range(n):
        if start[t]:
            vt = tau[t]
        else:
            vp = v[t - 1]
            if arch_mode == 2:
                s = eps[t - 1] * eps[t - 1]
            else:
                s = eps[t - 1] * math.exp(-0.5 * vp)
                if arch_mode == 1:
                    s = s * s
                else:
                    s = abs(s)
                    if arch_mode == 3:
                        s -= ABS_MEAN
            if var_mode == 0:
                h = vp - 2.0 * logmu[t - 1]
            elif var_mode == 1:
                h = vp - tau[t - 1]
            elif var_mode == 2:
                h = vp
            elif var_mode == 3:
                h = math.exp(vp)
            else:
                h = 0.5 * vp - logmu[t - 1]
            sh[t] = s
            hv[t] = h
            vt = tau[t] + b[t] * s + c[t] * h
        if not (abs(vt) <= cap):
            return v, sh, hv, False
        v[t] = vt
    return v, sh, hv, True


@numba.njit(cache=True)
def step2_kernel(tau, b, c, y, eps, logmu, obs, start, arch_mode, var_mode, cap):
    """Gamma log likelihood with fixed mean and recursive log variance.

    Returns ``(ll, ll_pointwise, v, g_tau, g_b, g_c, ok)``.
    """
    n = tau.shape[0]
    v, sh, hv, ok = variance_forward(tau, b, c, eps, logmu, start, arch_mode, var_mode, cap)
    llp = np.zeros(n)
    gv = np.zeros(n)
    g_tau = np.zeros(n)
    g_b = np.zeros(n)
    g_c = np.zeros(n)
    if not ok:
        return -np.inf, llp, v, g_tau, g_b, g_c, False
    ll = 0.0
    for t in range(n):
        if obs[t]:
            lnu = logmu[t] - v[t]
            a = math.exp(logmu[t] + lnu)
            nu = math.exp(lnu)
            ly = math.log(y[t])
            llp[t] = a * lnu - math.lgamma(a) + (a - 1.0) * ly - nu * y[t]
            ll += llp[t]
            gv[t] = -a * (lnu + ly - digamma(a)) - a + nu * y[t]
    if not math.isfinite(ll):
        return -np.inf, llp, v, g_tau, g_b, g_c, False
    for t in range(n - 1, -1, -1):
        g = gv[t]
        if t + 1 < n and not start[t + 1]:
            gn = gv[t + 1]
            if arch_mode == 0:
                dsh = -0.5 * sh[t + 1]
            elif arch_mode == 1:
                dsh = -sh[t + 1]
            elif arch_mode == 3:
                dsh = -0.5 * (sh[t + 1] + ABS_MEAN)
            else:
                dsh = 0.0
            if var_mode == 3:
                dh = math.exp(v[t])
            elif var_mode == 4:
                dh = 0.5
            else:
                dh = 1.0
            g += gn * (b[t + 1] * dsh + c[t + 1] * dh)
            if var_mode == 1:
                g_tau[t] -= gn * c[t + 1]
        gv[t] = g
        g_tau[t] += g
        g_b[t] = g * sh[t]
        g_c[t] = g * hv[t]
    return ll, llp, v, g_tau, g_b, g_c, True
