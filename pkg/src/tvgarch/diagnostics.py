"""Leave-one-out model comparison by Pareto-smoothed importance sampling, and predictive checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from tvgarch.likelihood import gamma_mv_logpdf, gamma_mv_sample

HIGH_K = 0.7
SIGMA2_FLOOR = 1e-12


@dataclass
class LooResult:
    elpd_loo: float
    looic: float
    se: float
    pareto_k: np.ndarray
    n_high_k: int
    pointwise: np.ndarray

    def to_dict(self):
        return {"elpd_loo": self.elpd_loo, "looic": self.looic, "se": self.se,
                "looic_se": 2.0 * self.se, "n_high_k": self.n_high_k,
                "pareto_k": self.pareto_k.tolist(), "elpd_pointwise": self.pointwise.tolist()}


def pointwise_loglik(draws, data) -> np.ndarray:
    """``draws x n_observed`` matrix of Gamma log densities at each draw's ``mu`` and ``sigma2``.

    Only genuinely observed points are scored: missing and imputed rows are dropped.
    """
    derived = getattr(draws, "derived", draws)
    if "mu" not in derived or "sigma2" not in derived:
        raise ValueError("draws lack derived 'mu' and 'sigma2' trajectories")
    mu = np.asarray(derived["mu"], dtype=float)
    s2 = np.asarray(derived["sigma2"], dtype=float)
    mu = mu.reshape(-1, mu.shape[-1])
    s2 = s2.reshape(-1, s2.shape[-1])
    obs = data.observed
    return gamma_mv_logpdf(data.y[obs][None, :], mu[:, obs], s2[:, obs])


# ---------------------------------------------------------------- generalised Pareto tail

def gpd_fit(x):
    """Shape and scale of a generalised Pareto fitted to ascending exceedances ``x``.

    Zhang and Stephens' profile-likelihood grid estimate, shrunk towards 0.5 by a
    weak prior worth 10 observations. Falls back to probability-weighted moments
    when the grid estimate is not finite.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    m = 30 + int(math.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b = b / (3.0 * x[int(n / 4 + 0.5) - 1]) + 1.0 / x[-1]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        k = np.log1p(-b[:, None] * x).mean(axis=1)
        prof = n * (np.log(-b / k) - k - 1.0)
        w = 1.0 / np.exp(prof - prof[:, None]).sum(axis=1)
    keep = np.isfinite(w) & (w >= 10 * np.finfo(float).eps)
    if keep.any():
        w, b = w[keep] / w[keep].sum(), b[keep]
        b_post = float(np.sum(b * w))
        k_post = float(np.log1p(-b_post * x).mean())
        sigma = -k_post / b_post
    else:
        k_post = sigma = float("nan")
    if not (np.isfinite(k_post) and np.isfinite(sigma) and sigma > 0):
        k_post, sigma = _gpd_pwm(x)
    k_post = (n * k_post + 10 * 0.5) / (n + 10)
    return k_post, sigma


def _gpd_pwm(x):
    # probability-weighted moments (Hosking and Wallis); their shape is -k here
    n = x.size
    p = (np.arange(1, n + 1) - 0.35) / n
    a0 = x.mean()
    a1 = np.mean(x * (1.0 - p))
    k = 2.0 - a0 / (a0 - 2.0 * a1)
    sigma = 2.0 * a0 * a1 / (a0 - 2.0 * a1)
    return float(k), float(sigma)


def gpd_quantile(p, k, sigma):
    p = np.asarray(p, dtype=float)
    if abs(k) < 1e-12:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def psis_smooth(log_ratios):
    """Pareto-smoothed normalised importance weights and the tail shape estimate ``k_hat``.

    The largest ``M = ceil(min(0.2 S, 3 sqrt(S)))`` ratios are replaced by
    expected order statistics of a generalised Pareto fitted to them,
    truncated at the largest raw ratio.
    """
    lr = np.asarray(log_ratios, dtype=float).ravel()
    s = lr.size
    if s < 100:
        raise ValueError("PSIS needs at least 100 draws")
    if not np.all(np.isfinite(lr)):
        raise ValueError("log ratios must be finite")
    x = lr - lr.max()
    if np.ptp(x) == 0:
        return np.full(s, 1.0 / s), -np.inf
    m = int(math.ceil(min(0.2 * s, 3.0 * math.sqrt(s))))
    order = np.argsort(x, kind="stable")
    cutoff = max(x[order[s - m - 1]], math.log(np.finfo(float).tiny))
    tail = order[s - m:]
    tail = tail[x[tail] > cutoff]
    k_hat = np.inf
    if tail.size > 4:
        exceed = np.exp(x[tail]) - math.exp(cutoff)
        k_hat, sigma = gpd_fit(exceed)
        if np.isfinite(k_hat):
            q = gpd_quantile((np.arange(tail.size) + 0.5) / tail.size, k_hat, sigma)
            x[tail] = np.minimum(np.log(q + math.exp(cutoff)), 0.0)
    w = np.exp(x - logsumexp(x))
    return w, float(k_hat)


def loo(loglik) -> LooResult:
    """PSIS-LOO from a ``draws x n`` pointwise log-likelihood matrix."""
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim == 3:
        ll = ll.reshape(-1, ll.shape[-1])
    n = ll.shape[1]
    elpd_i = np.empty(n)
    ks = np.empty(n)
    for i in range(n):
        w, k = psis_smooth(-ll[:, i])
        elpd_i[i] = logsumexp(ll[:, i], b=w)
        ks[i] = k
    elpd = float(elpd_i.sum())
    se = float(math.sqrt(n * elpd_i.var(ddof=1))) if n > 1 else 0.0
    return LooResult(elpd_loo=elpd, looic=-2.0 * elpd, se=se, pareto_k=ks,
                     n_high_k=int(np.sum(ks > HIGH_K)), pointwise=elpd_i)


def compare(results: dict) -> dict:
    """LOOIC per run and pairwise elpd differences with their standard errors."""
    names = list(results)
    out = {"runs": {k: {"looic": r.looic, "looic_se": 2.0 * r.se, "elpd_loo": r.elpd_loo,
                        "se": r.se, "n_high_k": r.n_high_k} for k, r in results.items()},
           "differences": []}
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = results[names[i]], results[names[j]]
            if a.pointwise.shape != b.pointwise.shape:
                raise ValueError("runs were scored on different observations")
            d = a.pointwise - b.pointwise
            se = float(math.sqrt(d.size * d.var(ddof=1))) if d.size > 1 else 0.0
            out["differences"].append({"a": names[i], "b": names[j],
                                       "elpd_diff": float(d.sum()), "se": se})
    return out


# ---------------------------------------------------------------- predictive checks

@dataclass
class PpdStats:
    mean_logscale: np.ndarray
    sd_logscale: np.ndarray
    observed_mean: float
    observed_sd: float

    def inside(self, level=0.95):
        lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
        qm = np.quantile(self.mean_logscale, [lo, hi])
        qs = np.quantile(self.sd_logscale, [lo, hi])
        return (bool(qm[0] <= self.observed_mean <= qm[1]),
                bool(qs[0] <= self.observed_sd <= qs[1]))


def ppd_stats(draws, data, seed=0, max_draws=None) -> PpdStats:
    """Mean and SD of log replicate data, one replicate series per posterior draw."""
    derived = getattr(draws, "derived", draws)
    mu = np.asarray(derived["mu"], dtype=float)
    s2 = np.asarray(derived["sigma2"], dtype=float)
    mu = mu.reshape(-1, mu.shape[-1])
    s2 = np.maximum(s2.reshape(-1, s2.shape[-1]), SIGMA2_FLOOR)
    obs = data.observed
    rng = np.random.default_rng(seed)
    idx = np.arange(mu.shape[0])
    if max_draws is not None and max_draws < idx.size:
        idx = np.sort(rng.choice(idx.size, max_draws, replace=False))
    rep = gamma_mv_sample(mu[idx][:, obs], s2[idx][:, obs], rng)
    lrep = np.log(np.maximum(rep, np.finfo(float).tiny))
    ly = np.log(data.y[obs])
    return PpdStats(mean_logscale=lrep.mean(axis=1), sd_logscale=lrep.std(axis=1, ddof=1),
                    observed_mean=float(ly.mean()), observed_sd=float(ly.std(ddof=1)))
