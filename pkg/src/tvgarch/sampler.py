"""Hamiltonian Monte Carlo over an unconstrained parameter vector.

Static-path HMC: each transition integrates ``L`` leapfrog steps, with ``L``
jittered around ``path_length / step_size``, and accepts with the Metropolis
rule. Warmup adapts the step size by dual averaging and a diagonal mass
matrix over doubling windows (75-step initial buffer, 100-step final buffer
by default).
The acceptance statistic used for adaptation and reported per draw is the
Metropolis acceptance probability averaged over all points of the trajectory,
as in tree-building samplers; the endpoint value alone is too noisy for dual
averaging to settle on the target.
Chains get independent seeds spawned from ``cfg.seed`` and may run in
separate processes (``TVGARCH_THREADS`` caps how many).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    target_accept: float = 0.8
    max_leapfrog: int = 1024
    seed: int = 0
    path_length: float = 1.0
    init_step_size: float = 0.1
    adapt_gamma: float = 0.1
    term_buffer: int = 100

    def __post_init__(self):
        if self.chains < 1 or self.warmup < 1 or self.draws < 1 or self.max_leapfrog < 1:
            raise ValueError("sampler counts must be positive")
        if self.term_buffer < 1 or not self.adapt_gamma > 0:
            raise ValueError("term_buffer and adapt_gamma must be positive")
        if not 0.5 < self.target_accept < 0.999:
            raise ValueError("target_accept must lie in (0.5, 0.999)")


@dataclass
class PosteriorDraws:
    names: list
    values: np.ndarray  # chains x draws x dim
    accept_stat: np.ndarray  # chains x draws
    divergent: np.ndarray  # chains x draws, bool
    n_leapfrog: np.ndarray  # chains x draws
    step_size: np.ndarray  # per chain
    inv_mass: np.ndarray  # chains x dim
    derived: dict = field(default_factory=dict)  # name -> chains x draws x n
    pointwise_loglik: np.ndarray | None = None  # chains x draws x n

    @property
    def n_chains(self):
        return self.values.shape[0]

    @property
    def n_draws(self):
        return self.values.shape[1]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.values.shape[-1])

    def divergences(self) -> np.ndarray:
        return self.divergent.sum(axis=1)

    @property
    def divergence_flag(self) -> bool:
        return bool(self.divergent.mean() > 0.2)

    def column(self, name):
        return self.values[..., self.names.index(name)]


# ---------------------------------------------------------------- adaptation

class DualAveraging:
    def __init__(self, step_size, target, gamma=0.1, t0=10.0, kappa=0.75, mu_factor=2.0):
        self.target = target
        self.gamma, self.t0, self.kappa, self.mu_factor = gamma, t0, kappa, mu_factor
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(self.mu_factor * step_size)
        self.count = 0
        self.h_bar = 0.0
        self.log_eps = math.log(step_size)
        self.log_eps_bar = 0.0

    def update(self, accept):
        self.count += 1
        w = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept)
        self.log_eps = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def adaptation_windows(warmup: int, term_buf: int = 100):
    """End indices (exclusive) of the slow mass-matrix windows."""
    init_buf, base = 75, 25
    if warmup < 20:
        return []
    if init_buf + term_buf + base > warmup:
        init_buf = int(0.15 * warmup)
        term_buf = int(0.1 * warmup)
        base = warmup - init_buf - term_buf
    ends = []
    start, size = init_buf, base
    last = warmup - term_buf
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return ends


class _Welford:
    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def variance(self):
        n = self.n
        var = self.m2 / max(n - 1, 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


# ---------------------------------------------------------------- integrator

def _guarded(logp_grad):
    """Map numeric failures (overflow, non-finite gradient) to a rejected point."""
    def f(q):
        try:
            with np.errstate(all="ignore"):
                lp, grad = logp_grad(q)
        except (OverflowError, FloatingPointError, ValueError, ZeroDivisionError):
            return -np.inf, np.zeros_like(q)
        if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
            return -np.inf, np.zeros_like(q)
        return float(lp), grad
    return f


def leapfrog(logp_grad, q, p, grad, step_size, inv_mass, n_steps, h0=None):
    """``n_steps`` leapfrog steps; returns ``(q, p, logp, grad)`` (logp ``-inf`` on failure).

    With the starting energy ``h0`` given, a fifth value is returned: the
    Metropolis acceptance probability averaged over every point of the
    trajectory, with points after a failure counted as zero.
    """
    q = q.copy()
    p = p + 0.5 * step_size * grad
    lp = -np.inf
    acc_sum = 0.0
    for i in range(n_steps):
        q = q + step_size * inv_mass * p
        lp, grad = logp_grad(q)
        if not np.isfinite(lp):
            out = (q, p, -np.inf, grad)
            return out if h0 is None else out + (acc_sum / n_steps,)
        if h0 is not None:
            dh = _hamiltonian(lp, p + 0.5 * step_size * grad, inv_mass) - h0
            acc_sum += math.exp(-dh) if dh > 0 else 1.0
        if i < n_steps - 1:
            p = p + step_size * grad
    p = p + 0.5 * step_size * grad
    out = (q, p, lp, grad)
    return out if h0 is None else out + (acc_sum / n_steps,)


def _hamiltonian(lp, p, inv_mass):
    with np.errstate(over="ignore", invalid="ignore"):
        return -lp + 0.5 * float(np.sum(inv_mass * p * p))


def _initial_step_size(logp_grad, q, lp, grad, inv_mass, rng, eps):
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = _hamiltonian(lp, p, inv_mass)
    _, p1, lp1, _ = leapfrog(logp_grad, q, p, grad, eps, inv_mass, 1)
    h1 = _hamiltonian(lp1, p1, inv_mass) if np.isfinite(lp1) else np.inf
    direction = 1 if (h0 - h1) > math.log(0.8) else -1
    for _ in range(60):
        _, p1, lp1, _ = leapfrog(logp_grad, q, p, grad, eps, inv_mass, 1)
        h1 = _hamiltonian(lp1, p1, inv_mass) if np.isfinite(lp1) else np.inf
        if direction == 1 and not (h0 - h1) > math.log(0.8):
            break
        if direction == -1 and (h0 - h1) > math.log(0.8):
            break
        eps = eps * 2.0 if direction == 1 else eps / 2.0
        if eps < 1e-10 or eps > 1e3:
            break
    return eps


def run_chain(logp_grad, init, cfg: SamplerConfig, seed_seq):
    """One adapted HMC chain. Returns a dict of per-draw arrays."""
    rng = np.random.default_rng(seed_seq)
    logp_grad = _guarded(logp_grad)
    q = np.asarray(init, dtype=float).copy()
    dim = q.size
    lp, grad = logp_grad(q)
    if not np.isfinite(lp) or not np.all(np.isfinite(grad)):
        raise ValueError("log density or gradient is not finite at the initial point")
    inv_mass = np.ones(dim)
    eps = _initial_step_size(logp_grad, q, lp, grad, inv_mass, rng, cfg.init_step_size)
    da = DualAveraging(eps, cfg.target_accept, gamma=cfg.adapt_gamma)
    windows = adaptation_windows(cfg.warmup, cfg.term_buffer)
    window_start = 75 if cfg.warmup >= 100 + cfg.term_buffer else int(0.15 * cfg.warmup)
    welford = _Welford(dim)

    total = cfg.warmup + cfg.draws
    out_q = np.empty((cfg.draws, dim))
    out_acc = np.empty(cfg.draws)
    out_div = np.zeros(cfg.draws, dtype=bool)
    out_L = np.empty(cfg.draws, dtype=np.int64)
    for it in range(total):
        warm = it < cfg.warmup
        n_steps = int(math.ceil(rng.uniform(0.5, 1.5) * cfg.path_length / eps))
        n_steps = min(max(n_steps, 1), cfg.max_leapfrog)
        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = _hamiltonian(lp, p0, inv_mass)
        q1, p1, lp1, grad1, adapt_stat = leapfrog(logp_grad, q, p0, grad, eps, inv_mass,
                                                  n_steps, h0=h0)
        if np.isfinite(lp1):
            dh = _hamiltonian(lp1, p1, inv_mass) - h0
        else:
            dh = np.inf
        divergent = not (dh < DIVERGENCE_THRESHOLD)
        accept = 0.0 if divergent or not np.isfinite(dh) else min(1.0, math.exp(-dh))
        if rng.uniform() < accept:
            q, lp, grad = q1, lp1, grad1
        if warm:
            eps = da.update(adapt_stat)
            if windows and window_start <= it < windows[-1]:
                welford.add(q)
                if it + 1 in windows:
                    inv_mass = welford.variance()
                    welford = _Welford(dim)
                    eps = _initial_step_size(logp_grad, q, lp, grad, inv_mass, rng, eps)
                    da.restart(eps)
            if it == cfg.warmup - 1:
                eps = da.final
        else:
            k = it - cfg.warmup
            out_q[k] = q
            out_acc[k] = adapt_stat
            out_div[k] = divergent
            out_L[k] = n_steps
    return {"values": out_q, "accept": out_acc, "divergent": out_div, "n_leapfrog": out_L,
            "step_size": eps, "inv_mass": inv_mass}


def _chain_job(args):
    target, init, cfg, ss = args
    return run_chain(target.logp_grad if hasattr(target, "logp_grad") else target, init, cfg, ss)


def chain_seeds(cfg: SamplerConfig):
    return np.random.SeedSequence(cfg.seed).spawn(cfg.chains)


def hmc_run(logpost_grad, init, cfg: SamplerConfig, names=None) -> PosteriorDraws:
    """Run ``cfg.chains`` independent chains.

    ``logpost_grad`` is a callable ``u -> (logp, grad)`` or an object with a
    ``logp_grad`` method (needed for process parallelism, since it must
    pickle). ``init`` is a vector shared by all chains, or a callable
    ``rng -> vector`` drawn with each chain's own generator.
    """
    seeds = chain_seeds(cfg)
    inits = []
    for ss in seeds:
        if callable(init):
            inits.append(np.asarray(init(np.random.default_rng(ss.spawn(1)[0])), dtype=float))
        else:
            inits.append(np.asarray(init, dtype=float))
    workers = int(os.environ.get("TVGARCH_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, cfg.chains))
    jobs = [(logpost_grad, q0, cfg, ss) for q0, ss in zip(inits, seeds)]
    if workers > 1 and hasattr(logpost_grad, "logp_grad"):
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    dim = inits[0].size
    return PosteriorDraws(
        names=list(names) if names is not None else [f"x[{i}]" for i in range(dim)],
        values=np.stack([r["values"] for r in results]),
        accept_stat=np.stack([r["accept"] for r in results]),
        divergent=np.stack([r["divergent"] for r in results]),
        n_leapfrog=np.stack([r["n_leapfrog"] for r in results]),
        step_size=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
    )


# ---------------------------------------------------------------- convergence diagnostics

def _autocov_fft(x):
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:n]
    return ac / n


def _ess_raw(chains):
    """Geyer initial-monotone-sequence ESS of a ``chains x draws`` array."""
    m, n = chains.shape
    acov = np.stack([_autocov_fft(c) for c in chains])
    chain_mean = chains.mean(axis=1)
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum consecutive pairs while positive, enforcing monotonicity
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / math.log10(m * n))
    return m * n / tau


def _split(x):
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, -n:]], axis=0)


def _rank_normalise(x):
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _rhat_classic(x):
    m, n = x.shape
    b = n * x.mean(axis=1).var(ddof=1)
    w = x.var(axis=1, ddof=1).mean()
    if not w > 0:
        return float("nan")
    return math.sqrt(((n - 1.0) / n * w + b / n) / w)


def rhat_ess_1d(x):
    """Rank-normalised split-R-hat (max of bulk and folded) and bulk ESS of ``chains x draws``.

    Returns ``(rhat, ess, degenerate)``; constant input gives ``(1.0, nan, True)``.
    """
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0 or not np.all(np.isfinite(x)):
        return 1.0, float("nan"), True
    sx = _split(x)
    z = _rank_normalise(sx)
    folded = _rank_normalise(np.abs(sx - np.median(sx)))
    rhat = max(_rhat_classic(z), _rhat_classic(folded))
    ess = _ess_raw(z)
    return rhat, ess, False


def diagnostics_rhat_ess(draws: PosteriorDraws | np.ndarray):
    """Per-parameter ``(rhat, ess)`` arrays plus a degenerate-parameter mask."""
    values = draws.values if isinstance(draws, PosteriorDraws) else np.asarray(draws)
    if values.ndim == 2:
        values = values[..., None]
    if values.shape[0] < 2 or values.shape[1] < 100:
        raise ValueError("need at least 2 chains of at least 100 draws")
    out = [rhat_ess_1d(values[..., k]) for k in range(values.shape[-1])]
    rhat = np.array([o[0] for o in out])
    ess = np.array([o[1] for o in out])
    flag = np.array([o[2] for o in out])
    return rhat, ess, flag


def credible_band(traj, probs=(0.1, 0.5, 0.9)):
    """Pointwise quantiles of a ``draws x n`` array of trajectories: 80% band by default."""
    traj = np.asarray(traj, dtype=float)
    if traj.ndim == 3:
        traj = traj.reshape(-1, traj.shape[-1])
    if traj.shape[0] < 100:
        raise ValueError("credible bands need at least 100 draws")
    q = np.quantile(traj, probs, axis=0)
    return q[0], q[1], q[2]
