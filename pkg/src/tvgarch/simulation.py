"""Synthetic TV-AR(1) / TV-GARCH(1,1) series with known coefficient trajectories.

The generators run the same recursions the fitted model uses. By default the
mean lag is ``log y_{t-1} - mu0``, the ARCH shock is the absolute
standardised residual less ``sqrt(2 / pi)`` and the variance lag is the previous
log coefficient of variation ``log sigma_{t-1} - log mu_{t-1}``. The literal forms (raw ``y``,
raw ``eps^2``, raw ``sigma2``) remain selectable, but they blow up for
coefficients of the sizes used below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from tvgarch.kernels import ABS_MEAN, ARCH_MODES, MEAN_LAG_MODES, VAR_LAG_MODES
from tvgarch.model import TimeSeriesData

KINDS = ("TVAR1", "TVARCH1", "TVGARCH01", "JOINT", "CUSTOM")
CAP = 50.0


def f_single(t):
    """Shared test function ``0.45 sin(0.0125 t) + 0.0005 t``."""
    t = np.asarray(t, dtype=float)
    out = 0.45 * np.sin(1.25e-2 * t) + 5e-4 * t
    return float(out) if out.ndim == 0 else out


def a_joint(t):
    t = np.asarray(t, dtype=float)
    return np.sin((t + 10.0) / 75.0) * (50.0 / (t + 100.0))


def b_joint(t):
    t = np.asarray(t, dtype=float)
    return 0.5 * np.exp(-(((t - 500.0) / 200.0) ** 10))


def c_joint(t):
    t = np.asarray(t, dtype=float)
    return 2.7e-9 * (t - 350.0) ** 3 + 5e-5 * t


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class SimSpec:
    """Generator settings.

    ``horizon`` rescales time before the coefficient functions are evaluated,
    ``t_eff = t * horizon / n``, so a shorter series traces the same curves
    as a length-``horizon`` one. ``None`` means no rescaling.
    """

    kind: str = "JOINT"
    n: int = 1000
    mu0: float = 3.0
    tau0: float = 2.25
    seed: int = 0
    horizon: float | None = None
    a_fn: Callable | None = None
    b_fn: Callable | None = None
    c_fn: Callable | None = None
    mean_lag: str = "log"
    arch: str = "abs_centred"
    var_lag: str = "logcv"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown simulation kind {self.kind!r}; expected one of {KINDS}")
        if int(self.n) < 2:
            raise ValueError("n must be at least 2")
        if self.mean_lag not in MEAN_LAG_MODES or self.arch not in ARCH_MODES \
                or self.var_lag not in VAR_LAG_MODES:
            raise ValueError("unknown recursion form")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")

    def time_grid(self):
        t = np.arange(1, self.n + 1, dtype=float)
        t_eff = t if self.horizon is None else t * (self.horizon / self.n)
        return t, t_eff

    def coefficient_functions(self):
        if self.kind == "TVAR1":
            return f_single, _zero, _zero
        if self.kind == "TVARCH1":
            return _zero, f_single, _zero
        if self.kind == "TVGARCH01":
            return _zero, _zero, f_single
        if self.kind == "JOINT":
            return a_joint, b_joint, c_joint
        return (self.a_fn or _zero, self.b_fn or _zero, self.c_fn or _zero)


def _run(spec: SimSpec):
    t, t_eff = spec.time_grid()
    fa, fb, fc = spec.coefficient_functions()
    a = np.broadcast_to(np.asarray(fa(t_eff), dtype=float), t.shape).copy()
    b = np.broadcast_to(np.asarray(fb(t_eff), dtype=float), t.shape).copy()
    c = np.broadcast_to(np.asarray(fc(t_eff), dtype=float), t.shape).copy()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    y = np.empty(n)
    log_mu = np.empty(n)
    log_s2 = np.empty(n)
    for i in range(n):
        if i == 0:
            lm, ls = spec.mu0, spec.tau0
        else:
            lag = math.log(y[i - 1]) - spec.mu0 if spec.mean_lag == "log" else y[i - 1]
            lm = spec.mu0 + a[i] * lag
            eps = y[i - 1] - math.exp(log_mu[i - 1])
            vp = log_s2[i - 1]
            if spec.arch == "raw_sq":
                shock = eps * eps
            else:
                es = eps * math.exp(-0.5 * vp)
                if spec.arch == "sq":
                    shock = es * es
                else:
                    shock = abs(es) - (ABS_MEAN if spec.arch == "abs_centred" else 0.0)
            if spec.var_lag == "logdisp":
                h = vp - 2.0 * log_mu[i - 1]
            elif spec.var_lag == "centred":
                h = vp - spec.tau0
            elif spec.var_lag == "log":
                h = vp
            elif spec.var_lag == "raw":
                h = math.exp(vp)
            else:
                h = 0.5 * vp - log_mu[i - 1]
            ls = spec.tau0 + b[i] * shock + c[i] * h
        if not (abs(lm) <= CAP and abs(ls) <= CAP):
            raise OverflowError(f"recursion overflow at t={int(t[i])} "
                                f"(log mean {lm:.3g}, log variance {ls:.3g})")
        log_mu[i], log_s2[i] = lm, ls
        mu, s2 = math.exp(lm), math.exp(ls)
        y[i] = rng.gamma(mu * mu / s2, s2 / mu)
        if not y[i] > 0:
            raise OverflowError(f"gamma draw underflowed to zero at t={int(t[i])}")
    truth = {"t": t, "a": a, "b": b, "c": c, "mu": np.exp(log_mu), "sigma2": np.exp(log_s2)}
    return TimeSeriesData(y=y, t=t), truth


def simulate_single(spec: SimSpec):
    """One of the single-coefficient processes; ``truth['f']`` is the varying function."""
    if spec.kind not in ("TVAR1", "TVARCH1", "TVGARCH01", "CUSTOM"):
        raise ValueError(f"simulate_single does not handle kind {spec.kind!r}")
    data, truth = _run(spec)
    _, t_eff = spec.time_grid()
    truth["f"] = f_single(t_eff)
    return data, truth


def simulate_joint(spec: SimSpec):
    """Coupled mean and variance process with all three coefficients varying."""
    if spec.kind != "JOINT":
        raise ValueError("simulate_joint needs kind='JOINT'")
    return _run(spec)


def simulate(spec: SimSpec):
    return simulate_joint(spec) if spec.kind == "JOINT" else simulate_single(spec)


def target_function(kind: str):
    """Name of the trajectory that varies in a single-process simulation."""
    return {"TVAR1": "a", "TVARCH1": "b", "TVGARCH01": "c"}[kind]
