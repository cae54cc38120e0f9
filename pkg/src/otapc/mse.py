"""Analytic aggregation MSE and its three-term decomposition.

Values are unscaled by default (the ``1/K^2`` prefactor of the raw
expectation is dropped, as the optimiser is invariant to it); pass
``scaled=True`` to get ``E||g_hat - g||^2`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import NoiseSpec, magnitudes_of
from .stats import GradientMoments, GradientStats


@dataclass(frozen=True)
class MseBreakdown:
    individual: float
    composite: float
    noise: float
    scaled_by_K2: bool = False

    @property
    def total(self) -> float:
        return self.individual + self.composite + self.noise

    def as_dict(self) -> dict:
        return {
            "individual": self.individual,
            "composite": self.composite,
            "noise": self.noise,
            "total": self.total,
            "scaled_by_K2": self.scaled_by_K2,
        }


def aggregation_levels(powers, channels, eta: float, alpha: float) -> np.ndarray:
    """G_k = sqrt(p_k / (eta * alpha)) * |h_k|."""
    p = np.asarray(powers, dtype=float).reshape(-1)
    h = magnitudes_of(channels)
    return np.sqrt(p / (eta * alpha)) * h


def _check(powers, eta):
    if not eta > 0:
        raise ValueError(f"denoising factor must be > 0, got {eta}")
    if np.any(np.asarray(powers, dtype=float) < 0):
        raise ValueError("powers must be non-negative")


def _assemble(w_ind, w_comp, g, eta, noise, scaled):
    k = g.size
    ind = w_ind * float(np.sum((g - 1.0) ** 2)) if w_ind else 0.0
    comp = w_comp * (float(np.sum(g)) - k) ** 2 if w_comp else 0.0
    nse = noise.total / eta if math.isfinite(eta) else 0.0
    if scaled:
        ind, comp, nse = ind / k**2, comp / k**2, nse / k**2
    return MseBreakdown(ind, comp, nse, scaled)


def mse_raw(
    moments: GradientMoments, powers, channels, eta: float, noise: NoiseSpec, scaled: bool = False
) -> MseBreakdown:
    """MSE written with per-dimension means and variances."""
    _check(powers, eta)
    if moments.dimension != noise.dimension:
        raise ValueError(f"moment dimension {moments.dimension} != noise dimension {noise.dimension}")
    var_e = moments.variance_energy
    mean_e = moments.mean_energy
    alpha = var_e + mean_e
    if alpha == 0:
        raise ValueError("degenerate gradient moments")
    g = aggregation_levels(powers, channels, eta, alpha)
    return _assemble(var_e, mean_e, g, eta, noise, scaled)


def mse_ab(
    stats: GradientStats, powers, channels, eta: float, noise: NoiseSpec, scaled: bool = False
) -> MseBreakdown:
    """MSE written with (alpha, beta); beta = inf is handled symbolically."""
    _check(powers, eta)
    if not stats.alpha > 0:
        raise ValueError("alpha must be > 0")
    g = aggregation_levels(powers, channels, eta, stats.alpha)
    return _assemble(stats.individual_weight, stats.composite_weight, g, eta, noise, scaled)
