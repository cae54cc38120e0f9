"""Gradient statistics: mean squared norm (alpha) and squared multivariate
coefficient of variation (beta), their online estimators, and a Gaussian
gradient generator with prescribed per-dimension moments.

``beta`` uses ``math.inf`` as the sentinel for zero-mean gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GradientMoments:
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float).reshape(-1)
        v = np.asarray(self.variances, dtype=float).reshape(-1)
        if m.shape != v.shape:
            raise ValueError(f"means and variances differ in length: {m.size} vs {v.size}")
        if m.size == 0:
            raise ValueError("moments need at least one dimension")
        if np.any(v < 0) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(m)):
            raise ValueError("variances must be finite and non-negative")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dimension(self) -> int:
        return self.means.size

    @property
    def mean_energy(self) -> float:
        """sum_d m_d^2"""
        return float(np.sum(self.means**2))

    @property
    def variance_energy(self) -> float:
        """sum_d sigma_d^2"""
        return float(np.sum(self.variances))


@dataclass(frozen=True)
class GradientStats:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0 or inf, got {self.beta}")

    @property
    def individual_weight(self) -> float:
        """beta*alpha/(beta+1), equal to sum_d sigma_d^2."""
        if math.isinf(self.beta):
            return self.alpha
        return self.beta * self.alpha / (self.beta + 1.0)

    @property
    def composite_weight(self) -> float:
        """alpha/(beta+1), equal to sum_d m_d^2."""
        if math.isinf(self.beta):
            return 0.0
        return self.alpha / (self.beta + 1.0)

    def scaled(self, c: float) -> "GradientStats":
        return GradientStats(self.alpha * c, self.beta)


def moments_to_stats(moments: GradientMoments) -> GradientStats:
    mean_e = moments.mean_energy
    var_e = moments.variance_energy
    if mean_e == 0 and var_e == 0:
        raise ValueError("degenerate gradient: all means and variances are zero")
    beta = math.inf if mean_e == 0 else var_e / mean_e
    return GradientStats(alpha=mean_e + var_e, beta=beta)


def estimate_alpha(norms) -> float:
    """Mean of the squared gradient norms reported by the devices."""
    b = np.asarray(norms, dtype=float).reshape(-1)
    if b.size == 0:
        raise ValueError("need at least one gradient norm")
    if np.any(b < 0):
        raise ValueError("gradient norms must be non-negative")
    return float(np.mean(b**2))


def estimate_beta(alpha_prev: float, aggregated_prev) -> float:
    """SMCV estimate for the next block from the previous block's recovered gradient.

    The raw estimate ``(alpha_prev - |g|^2) / |g|^2`` can go negative when the
    recovered gradient is inflated by noise; it is clamped at zero.  A zero
    recovered gradient yields ``math.inf``.
    """
    if not alpha_prev > 0:
        raise ValueError(f"alpha_prev must be > 0, got {alpha_prev}")
    energy = float(np.sum(np.asarray(aggregated_prev, dtype=float) ** 2))
    if energy == 0:
        return math.inf
    return max(0.0, (alpha_prev - energy) / energy)


def sample_gradients(moments: GradientMoments, device_count: int, rng_seed) -> np.ndarray:
    """(K, D) array with entry (k, d) ~ N(m_d, sigma_d^2), independent over k and d."""
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal((device_count, moments.dimension))
    return moments.means + z * np.sqrt(moments.variances)


def empirical_moments(samples) -> GradientMoments:
    """Per-dimension sample mean and (population) variance of stacked gradient draws."""
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    return GradientMoments(s.mean(axis=0), s.var(axis=0))
