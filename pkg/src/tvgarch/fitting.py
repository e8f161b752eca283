"""Two-step fit: the TV-AR(1) mean first, then the TV-GARCH(1,1) variance given its posterior mean."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from tvgarch.model import (
    ModelConfig,
    Step1Posterior,
    Step1Summary,
    Step2Posterior,
    TimeSeriesData,
    check_imputable,
    impute_missing,
    summarise_step1,
)
from tvgarch.sampler import PosteriorDraws, SamplerConfig, diagnostics_rhat_ess, hmc_run


@dataclass
class StepResult:
    posterior: object
    draws: PosteriorDraws
    rhat: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray
    seconds: float

    @property
    def max_rhat(self):
        r = self.rhat[~self.degenerate]
        return float(np.nanmax(r)) if r.size else 1.0

    @property
    def min_ess(self):
        e = self.ess[~self.degenerate]
        return float(np.nanmin(e)) if e.size else float("nan")

    def report(self):
        d = self.draws
        return {
            "max_rhat": self.max_rhat,
            "min_ess": self.min_ess,
            "divergences_per_chain": d.divergences().tolist(),
            "divergence_flag": d.divergence_flag,
            "mean_accept": float(d.accept_stat.mean()),
            "step_size": d.step_size.tolist(),
            "seconds": self.seconds,
            "parameters": {name: {"rhat": float(r), "ess": float(e)}
                           for name, r, e in zip(d.names, self.rhat, self.ess)},
        }


@dataclass
class FitResult:
    data: TimeSeriesData
    data_imputed: TimeSeriesData
    config: ModelConfig
    sampler: SamplerConfig
    step1: StepResult
    summary1: Step1Summary
    step2: StepResult
    extra: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.step1.max_rhat <= 1.1 and self.step2.max_rhat <= 1.1

    def trajectory_draws(self, name):
        """Flattened ``draws x n`` array of a derived trajectory from either step."""
        for step in (self.step1, self.step2):
            if name in step.draws.derived:
                arr = step.draws.derived[name]
                return arr.reshape(-1, arr.shape[-1])
        raise KeyError(name)

    def pointwise_loglik(self):
        """``draws x n_observed`` log likelihood of the full (mean + variance) model."""
        from tvgarch.diagnostics import pointwise_loglik
        return pointwise_loglik(self.step2.draws, self.data_imputed)


def _collect_derived(post, draws: PosteriorDraws, keys):
    c, s, _ = draws.values.shape
    out = {}
    for ci in range(c):
        for si in range(s):
            d = post.derived(draws.values[ci, si])
            for k in keys:
                if k not in out:
                    out[k] = np.empty((c, s, d[k].shape[0]))
                out[k][ci, si] = d[k]
    return out


def run_step(post, cfg: SamplerConfig, keys) -> StepResult:
    t0 = time.perf_counter()
    draws = hmc_run(post, post.init, cfg, names=post.names())
    draws.derived = _collect_derived(post, draws, keys)
    draws.pointwise_loglik = draws.derived.pop("loglik", None)
    rhat, ess, degenerate = diagnostics_rhat_ess(draws)
    return StepResult(posterior=post, draws=draws, rhat=rhat, ess=ess, degenerate=degenerate,
                      seconds=time.perf_counter() - t0)


def fit_two_step(data: TimeSeriesData, config: ModelConfig = ModelConfig(),
                 sampler: SamplerConfig = SamplerConfig(), sampler2: SamplerConfig | None = None,
                 ) -> FitResult:
    """Fit the mean model, impute gaps with its posterior mean, then fit the variance model."""
    check_imputable(data)
    post1 = Step1Posterior(data, config)
    step1 = run_step(post1, sampler, ("a_t", "mu", "sigma2", "loglik"))
    summary = summarise_step1(post1, step1.draws.flat())
    data2 = impute_missing(data, summary.state, post1.basis, config)
    post2 = Step2Posterior(data2, summary, config, basis_t=post1.basis)
    cfg2 = sampler2 or SamplerConfig(**{**sampler.__dict__, "seed": sampler.seed + 1})
    step2 = run_step(post2, cfg2, ("b_t", "c_t", "tau", "mu", "sigma2", "loglik"))
    return FitResult(data=data, data_imputed=data2, config=config, sampler=sampler,
                     step1=step1, summary1=summary, step2=step2)
