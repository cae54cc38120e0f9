"""Structure-free numerical minimiser of the aggregation MSE, used as a check.

Searches the box ``0 <= p_k <= P_k``, ``eta > 0`` without using any of the
threshold/subregion structure the closed-form solver relies on.  The search
runs in amplitude coordinates ``x_k = sqrt(p_k)`` and ``u = 1/sqrt(eta)``
(same box, smoother objective):

* multi-start projected coordinate descent, golden-section line search per
  coordinate, all restarts advanced together as numpy arrays;
* for K <= 3 additionally a dense grid over ``(x_1..x_K, u)``;
* L-BFGS-B refinement of the best few points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channel import NoiseSpec, sample_rayleigh_channels
from .mse import mse_ab
from .optimizer import AggregationProfile, PowerSolution, build_profile, select_lstar_by_interval, solve
from .rng import stream
from .stats import GradientStats

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN_STEPS = 40


@dataclass
class _Problem:
    c: np.ndarray  # |h_k| / sqrt(alpha)
    xmax: np.ndarray  # sqrt(P_k)
    a: float
    b: float
    noise: float
    umax: float

    @property
    def k(self) -> int:
        return self.c.size

    def value(self, z: np.ndarray) -> np.ndarray:
        """Objective for stacked points ``z`` of shape (..., K+1)."""
        x, u = z[..., :-1], z[..., -1:]
        g = self.c * x * u
        f = self.noise * u[..., 0] ** 2
        if self.a:
            f = f + self.a * np.sum((g - 1.0) ** 2, axis=-1)
        if self.b:
            f = f + self.b * (np.sum(g, axis=-1) - self.k) ** 2
        return f

    def grad(self, z: np.ndarray) -> np.ndarray:
        x, u = z[:-1], z[-1]
        g = self.c * x * u
        r = 2 * self.a * (g - 1.0) + 2 * self.b * (np.sum(g) - self.k)
        return np.concatenate([r * self.c * u, [np.sum(r * self.c * x) + 2 * self.noise * u]])

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([self.xmax, [self.umax]])


def _problem(profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec) -> _Problem:
    k = profile.device_count
    a, b = stats.individual_weight, stats.composite_weight
    c = profile.magnitudes / math.sqrt(stats.alpha)
    xmax = np.sqrt(profile.peak_powers)
    # zero transmit power gives a*K + b*K^2, which bounds N*u^2 at the optimum
    f_zero = a * k + b * k * k
    if noise.total > 0:
        umax = math.sqrt(f_zero / noise.total) * 1.01
    else:
        caps = c * xmax
        umax = 2.0 / caps[caps > 0].min()
    return _Problem(c, xmax, a, b, noise.total, umax)


def _coordinate_descent(prob: _Problem, z: np.ndarray, budget: list, sweeps: int, tol: float):
    """Advance all rows of ``z`` together; returns (z, converged)."""
    upper = prob.upper
    n = z.shape[0]
    f = prob.value(z)
    for _ in range(sweeps):
        f_start = f.copy()
        for j in range(prob.k + 1):
            lo = np.zeros(n)
            hi = np.full(n, upper[j])
            x1 = hi - _INVPHI * (hi - lo)
            x2 = lo + _INVPHI * (hi - lo)
            z1, z2 = z.copy(), z.copy()
            z1[:, j], z2[:, j] = x1, x2
            f1, f2 = prob.value(z1), prob.value(z2)
            for _ in range(GOLDEN_STEPS):
                left = f1 < f2
                hi = np.where(left, x2, hi)
                lo = np.where(left, lo, x1)
                new_x2 = np.where(left, x1, lo + _INVPHI * (hi - lo))
                new_x1 = np.where(left, hi - _INVPHI * (hi - lo), x2)
                f_keep = np.where(left, f1, f2)
                x1, x2 = new_x1, new_x2
                probe = np.where(left, x1, x2)
                zp = z.copy()
                zp[:, j] = probe
                fp = prob.value(zp)
                f1 = np.where(left, fp, f_keep)
                f2 = np.where(left, f_keep, fp)
            budget[0] -= (GOLDEN_STEPS + 2) * n
            cand = 0.5 * (lo + hi)
            zc = z.copy()
            zc[:, j] = cand
            # endpoints matter for box-constrained optima
            options = [zc]
            for end in (0.0, upper[j]):
                ze = z.copy()
                ze[:, j] = end
                options.append(ze)
            vals = np.stack([prob.value(o) for o in options])
            best = np.argmin(vals, axis=0)
            chosen = np.stack(options)[best, np.arange(n)]
            improve = vals[best, np.arange(n)] < f
            z = np.where(improve[:, None], chosen, z)
            f = np.minimum(f, vals[best, np.arange(n)])
        if np.all(f_start - f <= tol * np.maximum(np.abs(f), 1e-300)):
            return z, True
        if budget[0] <= 0:
            return z, False
    return z, False


def _polish(prob: _Problem, z0: np.ndarray) -> tuple[np.ndarray, float, bool]:
    bounds = list(zip(np.zeros(prob.k + 1), prob.upper))
    res = minimize(
        lambda z: float(prob.value(z)),
        z0,
        jac=prob.grad,
        bounds=bounds,
        method="L-BFGS-B",
        options={"ftol": 1e-16, "gtol": 1e-14, "maxiter": 5000},
    )
    z = np.clip(res.x, 0.0, prob.upper)
    return z, float(prob.value(z)), bool(res.success)


def _grid_points(prob: _Problem, per_axis: int) -> np.ndarray:
    axes = [np.linspace(0.0, ub, per_axis) for ub in prob.upper]
    axes[-1] = axes[-1][1:]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def oracle_solve(
    profile: AggregationProfile,
    stats: GradientStats,
    noise: NoiseSpec,
    budget: int = 5_000_000,
    restarts: int = 50,
    seed: int = 0,
    sweeps: int = 40,
) -> PowerSolution:
    """Best point found by brute-force search; ``converged`` is False if the budget ran out."""
    prob = _problem(profile, stats, noise)
    rng = np.random.default_rng(seed)
    left = [budget]
    starts = rng.uniform(0.0, 1.0, (restarts, prob.k + 1)) * prob.upper
    seeds = [starts]
    if prob.k <= 3:
        per_axis = {1: 400, 2: 60, 3: 22}[prob.k]
        grid = _grid_points(prob, per_axis)
        gv = prob.value(grid)
        left[0] -= grid.shape[0]
        seeds.append(grid[np.argsort(gv)[:5]])
    z = np.concatenate(seeds)
    z, _ = _coordinate_descent(prob, z, left, sweeps=sweeps, tol=1e-10)

    fz = prob.value(z)
    best_z, best_f = None, math.inf
    for i in np.argsort(fz)[:5]:
        zi, fi, _ = _polish(prob, z[i])
        if fz[i] < fi:
            zi, fi = z[i], float(fz[i])
        if fi < best_f:
            best_z, best_f = zi, fi
    converged = left[0] > 0
    if not converged:
        warnings.warn("oracle evaluation budget exhausted; returning best point so far", RuntimeWarning)

    x, u = best_z[:-1], best_z[-1]
    powers = np.minimum(x**2, profile.peak_powers)
    eta = math.inf if u == 0 else 1.0 / u**2
    peak_rank = powers[profile.order] >= profile.peak_powers[profile.order] * (1 - 1e-6)
    l_star = int(np.argmin(peak_rank)) if not peak_rank.all() else profile.device_count
    mse = mse_ab(stats, powers, profile.magnitudes, eta, noise) if math.isfinite(eta) else None
    return PowerSolution(powers, eta, l_star, mse, converged)


def oracle_value(profile: AggregationProfile, stats: GradientStats, noise: NoiseSpec, powers, eta) -> float:
    """The oracle's own objective at a given point, for cross-checking ``mse_ab``."""
    prob = _problem(profile, stats, noise)
    z = np.concatenate([np.sqrt(np.asarray(powers, dtype=float)), [1.0 / math.sqrt(eta)]])
    return float(prob.value(z))


@dataclass(frozen=True)
class OracleInstance:
    profile: AggregationProfile
    stats: GradientStats
    noise: NoiseSpec
    snr_db: float


def random_instance(
    k: int, trial: int, master_seed: int = 0, beta_range=(0.01, 100.0), snr_range_db=(0.0, 20.0)
) -> OracleInstance:
    """Rayleigh channels, log-uniform beta, uniform SNR in dB; D = 1, unit noise, alpha = 1."""
    r = stream(master_seed, "oracle-instance", trial)
    lo, hi = beta_range
    beta = float(math.exp(r.uniform(math.log(lo), math.log(hi))))
    snr = float(r.uniform(*snr_range_db))
    noise = NoiseSpec(1.0, 1)
    chans = sample_rayleigh_channels(k, r, 10 ** (snr / 10) * noise.total)
    stats = GradientStats(1.0, beta)
    return OracleInstance(build_profile(chans, stats.alpha), stats, noise, snr)


def compare_with_oracle(inst: OracleInstance, restarts: int = 50, seed: int = 0) -> dict:
    """Closed-form solution versus the brute-force search on one instance."""
    sol = solve(inst.profile, inst.stats, inst.noise)
    ref = oracle_solve(inst.profile, inst.stats, inst.noise, restarts=restarts, seed=seed)
    f_sol = sol.mse.total
    f_ref = oracle_value(inst.profile, inst.stats, inst.noise, ref.powers, ref.eta)
    return {
        "k": inst.profile.device_count,
        "beta": inst.stats.beta,
        "snr_db": inst.snr_db,
        "mse_solve": f_sol,
        "mse_oracle": f_ref,
        "rel_gap": (f_sol - f_ref) / f_ref,
        "l_star": sol.l_star,
        "l_star_interval": select_lstar_by_interval(inst.profile, inst.stats, inst.noise),
        "oracle_converged": ref.converged,
    }
