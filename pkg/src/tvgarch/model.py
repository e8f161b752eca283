"""Two-step TV-AR(1) mean / TV-GARCH(1,1) variance model under a mean-variance Gamma likelihood.

Step 1 fits the mean
``log mu_t = mu0 + x_t' beta + a(t) * lag(y_{t-1})``
with one constant dispersion per series. Step 2 freezes the step-1
posterior-mean ``mu_t`` and fits the log variance recursion
``v_t = tau_t + b(t) * shock_{t-1} + c(t) * lagvar_{t-1}``, ``sigma2_t = exp(v_t)``,
where ``tau_t`` is an intercept, optionally plus a smooth in ``mu_t``.

The lagged response, the ARCH shock and the lagged variance each have a
configurable transform (``ModelConfig``). The defaults keep the recursions
stable over the whole range of coefficient values used in the simulation
studies: the lagged response enters as the centred log response, the shock as
the absolute standardised residual less its mean ``sqrt(2 / pi)``, and the
lagged variance as the lagged log coefficient of variation ``log(sigma / mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma

from tvgarch import kernels
from tvgarch.basis import BasisSystem, design_matrix, make_basis
from tvgarch.blocks import Block, make_block
from tvgarch.priors import LOG_2PI, CoefficientBlock, PriorFamily


# ---------------------------------------------------------------- data

@dataclass
class TimeSeriesData:
    """Positive responses for one or more series, sorted by series then time."""

    y: np.ndarray
    t: np.ndarray
    X: np.ndarray | None = None
    series_id: np.ndarray | None = None
    missing_mask: np.ndarray | None = None
    imputed: np.ndarray | None = None
    covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        n = self.y.size
        self.t = np.asarray(self.t, dtype=float)
        if self.t.shape != (n,):
            raise ValueError("t and y lengths differ")
        if self.X is None:
            self.X = np.zeros((n, 0))
        self.X = np.asarray(self.X, dtype=float).reshape(n, -1)
        if self.series_id is None:
            self.series_id = np.zeros(n, dtype=object)
            self.series_id[:] = "1"
        self.series_id = np.asarray(self.series_id, dtype=object)
        if self.missing_mask is None:
            self.missing_mask = ~np.isfinite(self.y)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if self.imputed is None:
            self.imputed = np.zeros(n, dtype=bool)
        self.imputed = np.asarray(self.imputed, dtype=bool)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("covariates must be finite")
        present = ~self.missing_mask
        if np.any(~np.isfinite(self.y[present])) or np.any(self.y[present] <= 0):
            bad = np.where(present & ~(self.y > 0))[0]
            raise ValueError(f"responses must be > 0; offending rows {bad.tolist()}")
        self.start = np.ones(n, dtype=bool)
        if n > 1:
            same = self.series_id[1:] == self.series_id[:-1]
            self.start[1:] = ~same
            if np.any(same & (np.diff(self.t) <= 0)):
                raise ValueError("t must be strictly increasing within each series")
        ids = self.series_id[self.start]
        if len(set(ids.tolist())) != len(ids):
            raise ValueError("rows of each series must be contiguous")

    @property
    def n(self):
        return self.y.size

    @property
    def observed(self):
        """Rows entering the likelihood: present and not imputed."""
        return ~self.missing_mask & ~self.imputed

    @property
    def series_index(self):
        return np.cumsum(self.start) - 1

    @property
    def n_series(self):
        return int(self.start.sum())

    def series_labels(self):
        return self.series_id[self.start].tolist()


@dataclass(frozen=True)
class ModelConfig:
    m: int = 15
    width_factor: float = 1.0
    family_a: PriorFamily = PriorFamily("mv-horseshoe")
    family_b: PriorFamily = PriorFamily("mv-horseshoe")
    family_c: PriorFamily = PriorFamily("mv-horseshoe")
    family_tau: PriorFamily = PriorFamily("mv-horseshoe")
    tau_smooth: bool = False
    mean_lag: str = "log"
    var_lag: str = "logcv"
    arch: str = "abs_centred"
    cap: float = 50.0
    beta_sd: float = 10.0
    intercept_sd: float = 10.0

    def __post_init__(self):
        for name, modes in (("mean_lag", kernels.MEAN_LAG_MODES),
                            ("var_lag", kernels.VAR_LAG_MODES), ("arch", kernels.ARCH_MODES)):
            if getattr(self, name) not in modes:
                raise ValueError(f"{name} must be one of {sorted(modes)}")
        for fam in (self.family_a, self.family_b, self.family_c, self.family_tau):
            fam.check(self.m)

    @classmethod
    def with_family(cls, family: str | PriorFamily, **kw):
        fam = PriorFamily(family) if isinstance(family, str) else family
        return cls(family_a=fam, family_b=fam, family_c=fam, family_tau=fam, **kw)


@dataclass
class Step1State:
    mu0: float
    beta: np.ndarray
    a_block: CoefficientBlock
    dispersion: np.ndarray

    @property
    def a(self):
        return self.a_block.theta


@dataclass
class Step2State:
    tau0: float
    b_block: CoefficientBlock
    c_block: CoefficientBlock
    tau_block: CoefficientBlock | None = None


@dataclass
class Step1Summary:
    """Frozen step-1 quantities consumed by step 2."""

    mu: np.ndarray
    eps: np.ndarray
    eps_std: np.ndarray
    state: Step1State


def time_basis(data: TimeSeriesData, config: ModelConfig) -> BasisSystem:
    return make_basis(config.m, float(np.min(data.t)), float(np.max(data.t)), config.width_factor)


def mean_basis(mu: np.ndarray, config: ModelConfig) -> BasisSystem:
    lo, hi = float(np.min(mu)), float(np.max(mu))
    if hi <= lo:
        hi = lo + 1.0
    return make_basis(config.m, lo, hi, config.width_factor)


def lag_centre(data: TimeSeriesData) -> np.ndarray:
    """Per-row centring constant of the lagged log response: its series mean."""
    idx = data.series_index
    ok = ~data.missing_mask
    out = np.zeros(data.n_series)
    for s in range(data.n_series):
        sel = (idx == s) & ok
        out[s] = np.mean(np.log(data.y[sel])) if sel.any() else 0.0
    return out[idx]


# ---------------------------------------------------------------- public operations

def tvar_mean(state: Step1State, data: TimeSeriesData, basis: BasisSystem,
              config: ModelConfig = ModelConfig()) -> np.ndarray:
    """``mu_t`` under a step-1 state; missing lags take the model mean.

    Raises ``OverflowError`` when the linear predictor leaves ``[-cap, cap]``.
    """
    base = state.mu0 + data.X @ np.asarray(state.beta, dtype=float)
    at = design_matrix(basis, data.t) @ state.a
    y = np.where(data.missing_mask, 1.0, data.y)
    eta, _, ok = kernels.mean_forward(base, at, y, ~data.missing_mask, data.start,
                                      lag_centre(data), kernels.MEAN_LAG_MODES[config.mean_lag],
                                      config.cap)
    if not ok:
        raise OverflowError("linear predictor exceeded the exponent cap")
    return np.exp(eta)


def residuals(mu, y) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if mu.shape != y.shape:
        raise ValueError("length mismatch")
    return y - mu


def standardised_residuals(eps, sigma2) -> np.ndarray:
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0):
        raise ValueError("variances must be positive")
    return np.asarray(eps, dtype=float) / np.sqrt(sigma2)


def tvgarch_variance(state: Step2State, eps, data: TimeSeriesData, basis_t: BasisSystem,
                     basis_mu: BasisSystem | None, mu,
                     config: ModelConfig = ModelConfig()) -> np.ndarray:
    """Forward variance recursion given frozen mean ``mu`` and residuals ``eps``.

    ``sigma2_1 = exp(tau_1)`` at the start of each series. Raises
    ``OverflowError`` when the log variance leaves ``[-cap, cap]``.
    """
    mu = np.asarray(mu, dtype=float)
    B = design_matrix(basis_t, data.t)
    tau = np.full(data.n, float(state.tau0))
    if state.tau_block is not None:
        tau = tau + design_matrix(basis_mu, mu) @ state.tau_block.theta
    v, _, _, ok = kernels.variance_forward(
        tau, B @ state.b_block.theta, B @ state.c_block.theta, np.asarray(eps, dtype=float),
        np.log(mu), data.start, kernels.ARCH_MODES[config.arch],
        kernels.VAR_LAG_MODES[config.var_lag], config.cap)
    if not ok:
        raise OverflowError("log variance exceeded the exponent cap")
    return np.exp(v)


def check_imputable(data: TimeSeriesData):
    """Raise if some series starts with a missing response (no lag to impute from)."""
    first_missing = data.start & data.missing_mask
    if first_missing.any():
        sid = data.series_id[np.argmax(first_missing)]
        raise ValueError(f"series {sid!r} starts with a missing value; nothing to lag from")


def impute_missing(data: TimeSeriesData, state: Step1State, basis: BasisSystem,
                   config: ModelConfig = ModelConfig()) -> TimeSeriesData:
    """Fill missing responses with the step-1 mean, walking forward through gaps."""
    if not data.missing_mask.any():
        return data
    check_imputable(data)
    mu = tvar_mean(state, data, basis, config)
    y = np.where(data.missing_mask, mu, data.y)
    return replace(data, y=y, missing_mask=np.zeros(data.n, dtype=bool),
                   imputed=data.imputed | data.missing_mask)


# ---------------------------------------------------------------- posteriors

class Layout:
    """Named contiguous slices of an unconstrained parameter vector."""

    def __init__(self):
        self.slices = {}
        self.dim = 0

    def add(self, name, size):
        self.slices[name] = slice(self.dim, self.dim + size)
        self.dim += size

    def __getitem__(self, name):
        return self.slices[name]


def _normal_lp(x, sd):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * LOG_2PI - math.log(sd) - 0.5 * (x / sd) ** 2)), -x / sd ** 2


def _hc_log(s):
    return math.log(2.0 / math.pi) - float(np.logaddexp(0.0, 2.0 * s)) + s, -math.tanh(s)


class Step1Posterior:
    """Log posterior of the regression + TV-AR(1) mean model.

    Parameters (unconstrained): standardised intercept, standardised
    regression coefficients, log dispersion ``log(1/alpha)`` per series and
    the ``a`` block.
    """

    def __init__(self, data: TimeSeriesData, config: ModelConfig = ModelConfig(),
                 basis: BasisSystem | None = None):
        self.data = data
        self.config = config
        self.basis = basis or time_basis(data, config)
        self.B = design_matrix(self.basis, data.t)
        X = data.X
        self.x_mean = X.mean(axis=0) if X.shape[1] else np.zeros(0)
        sd = X.std(axis=0) if X.shape[1] else np.zeros(0)
        self.x_sd = np.where(sd > 0, sd, 1.0)
        self.Xz = (X - self.x_mean) / self.x_sd
        self.j = X.shape[1]
        self.block: Block = make_block(config.family_a, config.m, "a")
        self.centre = lag_centre(data)
        self.sidx = data.series_index
        self.ns = data.n_series
        self.obs = data.observed
        self.lag_obs = ~data.missing_mask
        self.y = np.where(data.missing_mask, 1.0, data.y)
        self.lag_mode = kernels.MEAN_LAG_MODES[config.mean_lag]
        lay = Layout()
        lay.add("mu0", 1)
        lay.add("beta", self.j)
        lay.add("logdisp", self.ns)
        lay.add("a", self.block.dim)
        self.layout = lay
        self.dim = lay.dim

    def names(self):
        return (["mu0_std"] + [f"beta_std[{k}]" for k in range(self.j)]
                + [f"logdisp[{k}]" for k in range(self.ns)] + self.block.names())

    def init(self, rng):
        lay = self.layout
        u = np.zeros(self.dim)
        ly = np.log(self.data.y[self.obs])
        u[lay["mu0"]] = ly.mean() + 0.05 * rng.standard_normal()
        u[lay["beta"]] = 0.05 * rng.standard_normal(self.j)
        for s in range(self.ns):
            sel = self.obs & (self.sidx == s)
            cv2 = np.var(self.data.y[sel]) / np.mean(self.data.y[sel]) ** 2 if sel.sum() > 1 else 1.0
            u[lay["logdisp"]][s] = math.log(max(cv2, 1e-6)) + 0.1 * rng.standard_normal()
        u[lay["a"]] = self.block.init(rng)
        return u

    def _unpack(self, u):
        lay = self.layout
        return u[lay["mu0"]][0], u[lay["beta"]], u[lay["logdisp"]], u[lay["a"]]

    def logp_grad(self, u):
        cfg = self.config
        mu0, beta, logdisp, ua = self._unpack(u)
        theta, lp_a, cache = self.block.forward(ua)
        at = self.B @ theta
        base = mu0 + self.Xz @ beta
        alpha_s = np.exp(-logdisp)
        alpha = alpha_s[self.sidx]
        ll, _, _, g_base, g_at, g_ld, ok = kernels.step1_kernel(
            base, at, self.y, self.lag_obs, self.data.start, self.centre, self.lag_mode,
            cfg.cap, alpha, digamma(alpha))
        if not ok or not np.isfinite(ll):
            return -np.inf, np.zeros(self.dim)
        lp_mu0, g_mu0 = _normal_lp(mu0, cfg.intercept_sd)
        lp_beta, g_beta = _normal_lp(beta, cfg.beta_sd)
        grad = np.empty(self.dim)
        lay = self.layout
        grad[lay["mu0"]] = g_base.sum() + g_mu0
        grad[lay["beta"]] = self.Xz.T @ g_base + g_beta
        g_logdisp = np.bincount(self.sidx, weights=g_ld, minlength=self.ns)
        lp_disp = 0.0
        for s in range(self.ns):
            v, d = _hc_log(logdisp[s])
            lp_disp += v
            g_logdisp[s] += d
        grad[lay["logdisp"]] = g_logdisp
        grad[lay["a"]] = self.block.backward(cache, self.B.T @ g_at)
        return ll + lp_mu0 + lp_beta + lp_disp + lp_a, grad

    def logp(self, u):
        return self.logp_grad(u)[0]

    def block_logprior(self, u):
        return self.block.forward(self._unpack(u)[3])[1]

    def state(self, u) -> Step1State:
        mu0, beta, logdisp, ua = self._unpack(u)
        beta_orig = beta / self.x_sd
        mu0_orig = float(mu0 - self.x_mean @ beta_orig)
        return Step1State(mu0=mu0_orig, beta=beta_orig, a_block=self.block.coefficient_block(ua),
                          dispersion=np.exp(logdisp))

    def derived(self, u):
        """Trajectories of one draw: ``a_t``, ``mu``, working ``sigma2`` and pointwise log lik."""
        mu0, beta, logdisp, ua = self._unpack(u)
        theta = self.block.theta(ua)
        at = self.B @ theta
        alpha = np.exp(-logdisp)[self.sidx]
        ll, llp, eta, *_rest, ok = kernels.step1_kernel(
            mu0 + self.Xz @ beta, at, self.y, self.lag_obs, self.data.start, self.centre,
            self.lag_mode, self.config.cap, alpha, digamma(alpha))
        mu = np.exp(eta)
        return {"a_t": at, "mu": mu, "sigma2": mu * mu / alpha, "loglik": llp}


class Step2Posterior:
    """Log posterior of the variance model given a frozen step-1 summary."""

    def __init__(self, data: TimeSeriesData, summary: Step1Summary,
                 config: ModelConfig = ModelConfig(), basis_t: BasisSystem | None = None,
                 basis_mu: BasisSystem | None = None):
        self.data = data
        self.config = config
        self.mu = np.asarray(summary.mu, dtype=float).copy()
        self.logmu = np.log(self.mu)
        self.eps = data.y - self.mu
        self.basis_t = basis_t or time_basis(data, config)
        self.Bt = design_matrix(self.basis_t, data.t)
        self.b_block = make_block(config.family_b, config.m, "b")
        self.c_block = make_block(config.family_c, config.m, "c")
        if config.tau_smooth:
            self.basis_mu = basis_mu or mean_basis(self.mu, config)
            self.Bmu = design_matrix(self.basis_mu, self.mu)
            self.tau_block = make_block(config.family_tau, config.m, "tau")
        else:
            self.basis_mu = None
            self.Bmu = None
            self.tau_block = None
        self.obs = data.observed
        self.arch_mode = kernels.ARCH_MODES[config.arch]
        self.var_mode = kernels.VAR_LAG_MODES[config.var_lag]
        lay = Layout()
        lay.add("tau0", 1)
        if self.tau_block is not None:
            lay.add("tau", self.tau_block.dim)
        lay.add("b", self.b_block.dim)
        lay.add("c", self.c_block.dim)
        self.layout = lay
        self.dim = lay.dim

    def names(self):
        out = ["tau0"]
        if self.tau_block is not None:
            out += self.tau_block.names()
        return out + self.b_block.names() + self.c_block.names()

    def init(self, rng):
        lay = self.layout
        u = np.zeros(self.dim)
        r2 = self.eps[self.obs] ** 2
        u[lay["tau0"]] = math.log(max(np.mean(r2), 1e-12)) + 0.05 * rng.standard_normal()
        if self.tau_block is not None:
            u[lay["tau"]] = self.tau_block.init(rng)
        u[lay["b"]] = self.b_block.init(rng)
        u[lay["c"]] = self.c_block.init(rng)
        return u

    def _forward_blocks(self, u):
        lay = self.layout
        tau0 = u[lay["tau0"]][0]
        tau = np.full(self.data.n, tau0)
        out = {}
        lp = 0.0
        if self.tau_block is not None:
            th, lpt, ct = self.tau_block.forward(u[lay["tau"]])
            tau = tau + self.Bmu @ th
            out["tau"] = ct
            lp += lpt
        thb, lpb, cb = self.b_block.forward(u[lay["b"]])
        thc, lpc, cc = self.c_block.forward(u[lay["c"]])
        out["b"], out["c"] = cb, cc
        lp += lpb + lpc
        return tau0, tau, self.Bt @ thb, self.Bt @ thc, lp, out

    def logp_grad(self, u):
        cfg = self.config
        tau0, tau, bt, ct, lp_blocks, caches = self._forward_blocks(u)
        ll, _, _, g_tau, g_b, g_c, ok = kernels.step2_kernel(
            tau, bt, ct, self.data.y, self.eps, self.logmu, self.obs, self.data.start,
            self.arch_mode, self.var_mode, cfg.cap)
        if not ok or not np.isfinite(ll):
            return -np.inf, np.zeros(self.dim)
        lp_tau0, g_tau0 = _normal_lp(tau0, cfg.intercept_sd)
        lay = self.layout
        grad = np.empty(self.dim)
        grad[lay["tau0"]] = g_tau.sum() + g_tau0
        if self.tau_block is not None:
            grad[lay["tau"]] = self.tau_block.backward(caches["tau"], self.Bmu.T @ g_tau)
        grad[lay["b"]] = self.b_block.backward(caches["b"], self.Bt.T @ g_b)
        grad[lay["c"]] = self.c_block.backward(caches["c"], self.Bt.T @ g_c)
        return ll + lp_tau0 + lp_blocks, grad

    def logp(self, u):
        return self.logp_grad(u)[0]

    def block_logprior(self, u):
        return self._forward_blocks(u)[4]

    def state(self, u) -> Step2State:
        lay = self.layout
        return Step2State(
            tau0=float(u[lay["tau0"]][0]),
            b_block=self.b_block.coefficient_block(u[lay["b"]]),
            c_block=self.c_block.coefficient_block(u[lay["c"]]),
            tau_block=(self.tau_block.coefficient_block(u[lay["tau"]])
                       if self.tau_block is not None else None))

    def derived(self, u):
        tau0, tau, bt, ct, _, _ = self._forward_blocks(u)
        ll, llp, v, *_rest, ok = kernels.step2_kernel(
            tau, bt, ct, self.data.y, self.eps, self.logmu, self.obs, self.data.start,
            self.arch_mode, self.var_mode, self.config.cap)
        return {"b_t": bt, "c_t": ct, "tau": tau, "mu": self.mu, "sigma2": np.exp(v),
                "loglik": llp}


def summarise_step1(post: Step1Posterior, draws: np.ndarray) -> Step1Summary:
    """Posterior-mean ``mu_t``, residuals and coefficients from flattened step-1 draws."""
    y = np.where(post.data.missing_mask, np.nan, post.data.y)
    mus, eps_std, states = [], [], []
    for u in draws:
        d = post.derived(u)
        mus.append(d["mu"])
        eps_std.append((y - d["mu"]) / np.sqrt(d["sigma2"]))
        states.append(post.state(u))
    mu = np.mean(mus, axis=0)
    y_filled = np.where(post.data.missing_mask, mu, post.data.y)
    state = Step1State(
        mu0=float(np.mean([s.mu0 for s in states])),
        beta=np.mean([s.beta for s in states], axis=0),
        a_block=CoefficientBlock(theta=np.mean([s.a for s in states], axis=0)),
        dispersion=np.mean([s.dispersion for s in states], axis=0))
    return Step1Summary(mu=mu, eps=y_filled - mu,
                        eps_std=np.nan_to_num(np.mean(eps_std, axis=0)), state=state)
