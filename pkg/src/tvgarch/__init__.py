"""Bayesian time-varying AR(1) / GARCH(1,1) models with a mean-variance Gamma likelihood."""

from tvgarch.basis import BasisSystem, design_matrix, eval_basis, make_basis, smooth_eval
from tvgarch.likelihood import (
    gamma_mv_grad,
    gamma_mv_logpdf,
    gamma_mv_sample,
    gamma_params_from_mv,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSystem",
    "make_basis",
    "eval_basis",
    "design_matrix",
    "smooth_eval",
    "gamma_params_from_mv",
    "gamma_mv_logpdf",
    "gamma_mv_sample",
    "gamma_mv_grad",
]
