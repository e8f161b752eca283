"""Equidistant Gaussian basis functions for smooth non-parametric terms.

A smooth is ``f(x) = sum_p theta_p * B_p(x)`` with
``B_p(x) = exp(-(x - c_p)**2 / (2 * width**2))`` and centres ``c_p`` spaced
evenly over ``[domain_lo, domain_hi]``. The bumps are not normalised to sum to
one; intercepts carry the level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BasisSystem:
    m: int
    domain_lo: float
    domain_hi: float
    centers: np.ndarray
    width: float

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / (self.m - 1)

    def __call__(self, xs) -> np.ndarray:
        return design_matrix(self, xs)


def make_basis(m: int = 15, domain_lo: float = 0.0, domain_hi: float = 1.0,
               width_factor: float = 1.0) -> BasisSystem:
    """Build ``m`` Gaussian bumps with centres spanning the domain.

    The bandwidth is ``width_factor`` times the centre spacing.
    """
    if int(m) != m or m < 2:
        raise ValueError(f"need at least 2 basis dimensions, got m={m}")
    lo, hi = float(domain_lo), float(domain_hi)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"degenerate basis domain [{lo}, {hi}]")
    if not width_factor > 0:
        raise ValueError("width_factor must be positive")
    m = int(m)
    centers = lo + (hi - lo) * np.arange(m) / (m - 1)
    centers[-1] = hi
    width = float(width_factor) * (hi - lo) / (m - 1)
    return BasisSystem(m=m, domain_lo=lo, domain_hi=hi, centers=centers, width=width)


def eval_basis(sys: BasisSystem, x: float) -> np.ndarray:
    z = (float(x) - sys.centers) / sys.width
    return np.exp(-0.5 * z * z)


def design_matrix(sys: BasisSystem, xs) -> np.ndarray:
    """Rows of basis values ``B_p(x_i)``, shape ``(len(xs), m)``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.ndim != 1 or xs.size == 0:
        raise ValueError("design_matrix needs a non-empty 1-d array of points")
    z = (xs[:, None] - sys.centers[None, :]) / sys.width
    return np.exp(-0.5 * z * z)


def smooth_eval(theta, row) -> float:
    theta = np.asarray(theta, dtype=float)
    row = np.asarray(row, dtype=float)
    if theta.shape != row.shape:
        raise ValueError(f"length mismatch: theta {theta.shape} vs row {row.shape}")
    return float(theta @ row)
