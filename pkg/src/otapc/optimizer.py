"""Closed-form optimal power control for over-the-air gradient aggregation.

Minimises

    A * sum_k (G_k - 1)^2 + B * (sum_k G_k - K)^2 + D*sigma_n^2 / eta

over ``0 <= p_k <= P_k`` and ``eta > 0`` where ``G_k = sqrt(p_k/(eta*alpha))|h_k|``,
``A = beta*alpha/(beta+1)`` and ``B = alpha/(beta+1)``.

Devices are ranked by aggregation capability ``C_k = sqrt(P_k/alpha)|h_k|``.
The optimum puts the ``l`` weakest devices at full power and gives the rest a
common aggregation level.  For each ``l`` the relaxed sub-problem has a closed
form; candidates whose tail powers would reach the peak are illegal, and the
answer is the legal candidate of least MSE.  ``beta = 0`` (full power) and
``beta = inf`` (threshold / channel inversion) are handled separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import DeviceChannel, NoiseSpec, magnitudes_of, peak_powers_of
from .mse import MseBreakdown, mse_ab
from .stats import GradientStats

# relative margin for the strict p_tail < P_k legality test
LEGALITY_MARGIN = 1e-12


class InfeasibleError(ValueError):
    """No device can deliver any signal (all channel magnitudes are zero)."""


@dataclass(frozen=True)
class AggregationProfile:
    """Devices ranked by aggregation capability.

    ``order[i]`` is the original index of the i-th weakest device.  All other
    arrays are in original device order.
    """

    order: np.ndarray
    capabilities: np.ndarray
    magnitudes: np.ndarray
    peak_powers: np.ndarray
    alpha: float

    @property
    def device_count(self) -> int:
        return self.order.size

    @property
    def sorted_capabilities(self) -> np.ndarray:
        return self.capabilities[self.order]

    def with_alpha(self, alpha: float) -> "AggregationProfile":
        return build_profile_arrays(self.magnitudes, self.peak_powers, alpha)


@dataclass(frozen=True)
class SubregionCandidate:
    l: int
    powers: np.ndarray
    eta: float
    value: float
    legal: bool
    common_level: float


@dataclass(frozen=True)
class PowerSolution:
    powers: np.ndarray
    eta: float
    l_star: int
    mse: MseBreakdown
    converged: bool = True
    candidates: tuple = field(default=(), repr=False)


def build_profile_arrays(magnitudes, peak_powers, alpha: float) -> AggregationProfile:
    h = np.asarray(magnitudes, dtype=float).reshape(-1)
    p = np.broadcast_to(np.asarray(peak_powers, dtype=float), h.shape).copy()
    if h.size < 1:
        raise ValueError("need at least one device")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if np.any(h < 0) or np.any(p <= 0):
        raise ValueError("magnitudes must be >= 0 and peak powers > 0")
    caps = np.sqrt(p / alpha) * h
    # stable sort: equal capabilities keep their original index order
    order = np.argsort(caps, kind="stable")
    return AggregationProfile(order, caps, h, p, float(alpha))


def build_profile(channels: Sequence[DeviceChannel], alpha: float) -> AggregationProfile:
    return build_profile_arrays(magnitudes_of(channels), peak_powers_of(channels), alpha)


def _check_stats(profile: AggregationProfile, stats: GradientStats):
    if not math.isclose(profile.alpha, stats.alpha, rel_tol=1e-12):
        raise ValueError(f"profile built for alpha={profile.alpha}, stats carry alpha={stats.alpha}")


def _unsort(profile: AggregationProfile, sorted_values: np.ndarray) -> np.ndarray:
    out = np.empty_like(sorted_values)
    out[profile.order] = sorted_values
    return out


def _value(profile, stats, powers, eta, noise) -> MseBreakdown:
    return mse_ab(stats, powers, profile.magnitudes, eta, noise)


def candidate_for_subregion(
    l: int, profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec
) -> SubregionCandidate:
    """Optimum of the relaxed sub-problem with the ``l`` weakest devices at peak power.

    Requires finite ``beta > 0``.
    """
    _check_stats(profile, stats)
    k = profile.device_count
    if not 1 <= l <= k:
        raise ValueError(f"l must lie in 1..{k}, got {l}")
    beta = stats.beta
    if not (0 < beta < math.inf):
        raise ValueError(f"general-case candidates need finite beta > 0, got {beta}")
    alpha = stats.alpha
    caps = profile.sorted_capabilities
    s1 = float(np.sum(caps[:l]))
    s2 = float(np.sum(caps[:l] ** 2))
    if s1 == 0:
        raise ValueError(f"subregion l={l} has zero total capability among full-power devices")

    a = stats.individual_weight
    rest = beta + k - l
    sqrt_eta = (a * s2 + a * s1**2 / rest + noise.total) / (a * s1 * (beta + k) / rest)
    eta = sqrt_eta**2
    level = (beta + k - s1 / sqrt_eta) / rest

    h = profile.magnitudes[profile.order]
    peak = profile.peak_powers[profile.order]
    p_sorted = peak.copy()
    tail = slice(l, k)
    p_sorted[tail] = level**2 * alpha * eta / h[tail] ** 2
    legal = bool(np.all(p_sorted[tail] < peak[tail] * (1 - LEGALITY_MARGIN)))
    powers = _unsort(profile, p_sorted)
    value = _value(profile, stats, powers, eta, noise)
    return SubregionCandidate(l, powers, eta, value.total, legal, level)


def threshold_candidate(
    l: int, profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec
) -> SubregionCandidate:
    """beta = inf sub-problem: tail devices invert their channel to level 1."""
    k = profile.device_count
    alpha = stats.alpha
    caps = profile.sorted_capabilities
    s1 = float(np.sum(caps[:l]))
    s2 = float(np.sum(caps[:l] ** 2))
    if s1 == 0:
        raise ValueError(f"subregion l={l} has zero total capability among full-power devices")
    eta = ((alpha * s2 + noise.total) / (alpha * s1)) ** 2
    h = profile.magnitudes[profile.order]
    peak = profile.peak_powers[profile.order]
    p_sorted = peak.copy()
    p_sorted[l:] = alpha * eta / h[l:] ** 2
    legal = bool(np.all(p_sorted[l:] < peak[l:] * (1 - LEGALITY_MARGIN)))
    powers = _unsort(profile, p_sorted)
    value = _value(profile, stats, powers, eta, noise)
    return SubregionCandidate(l, powers, eta, value.total, legal, 1.0)


def full_power_eta(profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec) -> float:
    """Best denoising factor when every device transmits at peak power.

    Uses the general closed form with all devices in the full-power set; at
    ``beta = 0`` this is the composite-only optimum and at ``beta = inf`` the
    individual-only optimum.
    """
    k = profile.device_count
    alpha = stats.alpha
    caps = profile.sorted_capabilities
    s1 = float(np.sum(caps))
    s2 = float(np.sum(caps**2))
    if s1 == 0:
        raise InfeasibleError("all channel magnitudes are zero")
    beta = stats.beta
    if math.isinf(beta):
        return ((alpha * s2 + noise.total) / (alpha * s1)) ** 2
    # multiply through by (beta+1)/alpha to stay finite as beta -> 0
    num = beta * s2 + s1**2 + noise.total * (beta + 1) / alpha
    return (num / ((beta + k) * s1)) ** 2


def _full_power_solution(profile, stats, noise) -> PowerSolution:
    eta = full_power_eta(profile, stats, noise)
    powers = profile.peak_powers.copy()
    return PowerSolution(powers, eta, profile.device_count, _value(profile, stats, powers, eta, noise))


def solve(profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec) -> PowerSolution:
    """Globally optimal powers and denoising factor for known gradient statistics."""
    _check_stats(profile, stats)
    caps = profile.sorted_capabilities
    if not np.any(caps > 0):
        raise InfeasibleError("all channel magnitudes are zero; no transmission possible")
    if stats.beta == 0:
        return _full_power_solution(profile, stats, noise)

    make = threshold_candidate if math.isinf(stats.beta) else candidate_for_subregion
    csum = np.cumsum(caps)
    best = None
    candidates = []
    for l in range(1, profile.device_count + 1):
        if csum[l - 1] == 0:
            # zero-capability devices sort first and cannot anchor the full-power set
            continue
        cand = make(l, profile, stats, noise)
        candidates.append(cand)
        if cand.legal and (best is None or cand.value < best.value):
            best = cand
    assert best is not None, "l = K is always legal"
    powers = np.minimum(best.powers, profile.peak_powers)
    return PowerSolution(
        powers, best.eta, best.l, _value(profile, stats, powers, best.eta, noise), True, tuple(candidates)
    )


def solve_channels(
    channels: Sequence[DeviceChannel], stats: GradientStats, noise: NoiseSpec
) -> PowerSolution:
    return solve(build_profile(channels, stats.alpha), stats, noise)


def tail_levels(solution: PowerSolution, profile: AggregationProfile) -> np.ndarray:
    """sqrt(p_k)|h_k|/sqrt(alpha) for the devices above the threshold, in rank order."""
    idx = profile.order[solution.l_star:]
    return np.sqrt(solution.powers[idx]) * profile.magnitudes[idx] / math.sqrt(profile.alpha)


def verify_lstar_interval(
    solution: PowerSolution, profile: AggregationProfile, stats: GradientStats, rtol: float = 1e-9
) -> bool:
    """Check C_l <= sqrt(p_k)|h_k|/sqrt(alpha) < C_{l+1} for every device above ``l = l_star``."""
    _check_stats(profile, stats)
    l = solution.l_star
    k = profile.device_count
    if l >= k:
        return True
    caps = profile.sorted_capabilities
    lv = tail_levels(solution, profile)
    lower_ok = bool(np.all(caps[l - 1] <= lv * (1 + rtol)))
    upper_ok = bool(np.all(lv < caps[l]))
    return lower_ok and upper_ok


def select_lstar_by_interval(
    profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec, rtol: float = 1e-9
) -> int:
    """Pick the threshold index by the interval condition instead of comparing MSE values.

    Returns the first ``l`` whose relaxed candidate satisfies the interval test,
    or 0 if none does.
    """
    caps = profile.sorted_capabilities
    csum = np.cumsum(caps)
    make = threshold_candidate if math.isinf(stats.beta) else candidate_for_subregion
    for l in range(1, profile.device_count + 1):
        if csum[l - 1] == 0:
            continue
        cand = make(l, profile, stats, noise)
        sol = PowerSolution(cand.powers, cand.eta, l, MseBreakdown(0.0, 0.0, 0.0))
        if verify_lstar_interval(sol, profile, stats, rtol):
            return l
    return 0


def sweep_beta(
    profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec, betas: Sequence[float]
) -> list[PowerSolution]:
    """Solve along a grid of beta values with alpha taken from ``stats``."""
    betas = list(betas)
    if any(b2 < b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta grid must be sorted ascending")
    return [solve(profile, GradientStats(stats.alpha, float(b)), noise) for b in betas]


def sweep_rows(betas: Sequence[float], solutions: Sequence[PowerSolution]) -> list[dict]:
    """CSV-ready rows: beta, l_star, p_1..p_K, eta, mse_total."""
    rows = []
    for b, sol in zip(betas, solutions):
        row = {"beta": b, "l_star": sol.l_star}
        for i, p in enumerate(sol.powers, start=1):
            row[f"p_{i}"] = float(p)
        row["eta"] = sol.eta
        row["mse_total"] = sol.mse.total
        rows.append(row)
    return rows
