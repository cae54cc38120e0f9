import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otapc.channel import NoiseSpec, sample_rayleigh_channels
from otapc.config import FIG3_MAGNITUDES
from otapc.mse import aggregation_levels
from otapc.optimizer import (
    InfeasibleError,
    PowerSolution,
    build_profile,
    build_profile_arrays,
    candidate_for_subregion,
    full_power_eta,
    select_lstar_by_interval,
    solve,
    sweep_beta,
    sweep_rows,
    tail_levels,
    threshold_candidate,
    verify_lstar_interval,
)
from otapc.stats import GradientStats

from conftest import UNIT_NOISE, make_channels

FIG3_ALPHA = 0.25


def fig3_profile(snr_db=10.0):
    return build_profile_arrays(FIG3_MAGNITUDES, 10 ** (snr_db / 10), FIG3_ALPHA)


def random_problem(seed, k=None, beta=None):
    r = np.random.default_rng(seed)
    k = k or int(r.integers(1, 7))
    snr = r.uniform(0, 20)
    alpha = float(np.exp(r.uniform(-3, 3)))
    beta = float(np.exp(r.uniform(np.log(0.01), np.log(100)))) if beta is None else beta
    peaks = 10 ** (snr / 10) * r.uniform(0.5, 2, k)
    chans = sample_rayleigh_channels(k, r, peaks)
    return build_profile(chans, alpha), GradientStats(alpha, beta), UNIT_NOISE


problem_seeds = st.integers(0, 10**6)


# profile


def test_fig3_order_preserved():
    p = fig3_profile()
    np.testing.assert_array_equal(p.order, np.arange(6))
    assert np.all(np.diff(p.sorted_capabilities) >= 0)


def test_single_device_capability():
    p = build_profile(make_channels([0.6], peak_power=2.0), 0.5)
    assert p.capabilities[0] == pytest.approx(math.sqrt(2.0 / 0.5) * 0.6)


def test_tie_break_by_index():
    p = build_profile(make_channels([1.0, 0.5, 1.0, 0.5]), 1.0)
    np.testing.assert_array_equal(p.order, [1, 3, 0, 2])


def test_profile_rejects_bad_alpha():
    with pytest.raises(ValueError):
        build_profile(make_channels([1.0]), 0.0)


def test_stats_alpha_must_match_profile():
    with pytest.raises(ValueError):
        solve(build_profile(make_channels([1.0, 2.0]), 1.0), GradientStats(2.0, 1.0), UNIT_NOISE)


# subregion candidates


def test_candidate_hand_computed():
    profile = build_profile(make_channels([1.0, 2.0], peak_power=1.0), 1.0)
    cand = candidate_for_subregion(1, profile, GradientStats(1.0, 1.0), UNIT_NOISE)
    assert cand.eta == pytest.approx(49 / 9, rel=1e-14)
    assert cand.common_level == pytest.approx(9 / 7, rel=1e-14)
    assert cand.value == pytest.approx(3 / 7, rel=1e-14)
    assert cand.powers[1] == pytest.approx(9 / 4, rel=1e-14)
    assert cand.powers[0] == 1.0
    assert not cand.legal


def test_last_candidate_always_legal():
    for seed in range(50):
        profile, stats, noise = random_problem(seed)
        assert candidate_for_subregion(profile.device_count, profile, stats, noise).legal


@settings(max_examples=100, deadline=None)
@given(seed=problem_seeds)
def test_tail_levels_equal_common_level(seed):
    profile, stats, noise = random_problem(seed, k=5)
    for l in range(1, 5):
        cand = candidate_for_subregion(l, profile, stats, noise)
        g = aggregation_levels(cand.powers, profile.magnitudes, cand.eta, stats.alpha)
        np.testing.assert_allclose(g[profile.order[l:]], cand.common_level, rtol=1e-12)
        np.testing.assert_array_equal(cand.powers[profile.order[:l]], profile.peak_powers[profile.order[:l]])


def test_candidate_preconditions():
    profile = build_profile(make_channels([0.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        candidate_for_subregion(1, profile, GradientStats(1.0, 1.0), UNIT_NOISE)
    with pytest.raises(ValueError):
        candidate_for_subregion(0, profile, GradientStats(1.0, 1.0), UNIT_NOISE)
    with pytest.raises(ValueError):
        candidate_for_subregion(2, profile, GradientStats(1.0, math.inf), UNIT_NOISE)
    with pytest.raises(ValueError):
        candidate_for_subregion(2, profile, GradientStats(1.0, 0.0), UNIT_NOISE)


# solve


def test_full_power_at_beta_zero():
    profile = build_profile(make_channels([1.0, 2.0], peak_power=1.0), 1.0)
    sol = solve(profile, GradientStats(1.0, 0.0), UNIT_NOISE)
    np.testing.assert_array_equal(sol.powers, [1.0, 1.0])
    assert sol.eta == pytest.approx(25 / 9, rel=1e-14)
    assert sol.l_star == 2


def test_all_zero_channels_infeasible():
    profile = build_profile(make_channels([0.0, 0.0]), 1.0)
    with pytest.raises(InfeasibleError):
        solve(profile, GradientStats(1.0, 1.0), UNIT_NOISE)


@pytest.mark.parametrize("beta", [0.0, 0.5, 20.0, math.inf])
def test_zero_magnitude_device(beta):
    chans = make_channels([0.0, 0.7, 1.4], peak_power=4.0)
    sol = solve(build_profile(chans, 1.0), GradientStats(1.0, beta), UNIT_NOISE)
    assert sol.powers[0] == 4.0
    assert np.all(np.isfinite(sol.powers))
    assert sol.l_star >= 1


@settings(max_examples=200, deadline=None)
@given(seed=problem_seeds)
def test_lemma1_eta_lower_bound(seed):
    profile, stats, noise = random_problem(seed)
    sol = solve(profile, stats, noise)
    assert sol.eta >= profile.sorted_capabilities[0] ** 2 * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=problem_seeds)
def test_lemma2_prefix_structure(seed):
    profile, stats, noise = random_problem(seed)
    sol = solve(profile, stats, noise)
    p = sol.powers[profile.order]
    peak = profile.peak_powers[profile.order]
    l = sol.l_star
    np.testing.assert_array_equal(p[:l], peak[:l])
    assert np.all(p[l:] < peak[l:])
    assert np.all(p >= 0)


@settings(max_examples=200, deadline=None)
@given(seed=problem_seeds)
def test_interval_verification_holds(seed):
    profile, stats, noise = random_problem(seed)
    sol = solve(profile, stats, noise)
    assert verify_lstar_interval(sol, profile, stats)
    assert select_lstar_by_interval(profile, stats, noise) == sol.l_star


def test_interval_vacuous_at_K():
    profile, stats, noise = random_problem(3, k=3)
    sol = PowerSolution(profile.peak_powers, 1.0, 3, None)
    assert verify_lstar_interval(sol, profile, stats)


def test_interval_detects_violation():
    profile = fig3_profile(10.0)
    stats = GradientStats(FIG3_ALPHA, 1.3)
    sol = solve(profile, stats, UNIT_NOISE)
    assert sol.l_star == 2
    assert verify_lstar_interval(sol, profile, stats)
    caps = profile.sorted_capabilities
    bumped = sol.powers.copy()
    k = profile.order[sol.l_star]
    level = caps[sol.l_star] * 1.01
    bumped[k] = (level * math.sqrt(FIG3_ALPHA) / profile.magnitudes[k]) ** 2
    bad = PowerSolution(bumped, sol.eta, sol.l_star, sol.mse)
    assert tail_levels(bad, profile).max() >= caps[sol.l_star]
    assert not verify_lstar_interval(bad, profile, stats)


@settings(max_examples=100, deadline=None)
@given(seed=problem_seeds)
def test_permuting_equal_devices_keeps_mse(seed):
    r = np.random.default_rng(seed)
    h = r.uniform(0.2, 2, 3)
    h = np.concatenate([h, h[:1]])
    stats, noise = GradientStats(1.0, float(r.uniform(0.1, 10))), UNIT_NOISE
    a = solve(build_profile(make_channels(h, 5.0), 1.0), stats, noise)
    b = solve(build_profile(make_channels(h[::-1], 5.0), 1.0), stats, noise)
    assert a.mse.total == pytest.approx(b.mse.total, rel=1e-12)


# special cases


@settings(max_examples=100, deadline=None)
@given(seed=problem_seeds)
def test_threshold_structure_at_beta_inf(seed):
    profile, _, noise = random_problem(seed)
    stats = GradientStats(profile.alpha, math.inf)
    sol = solve(profile, stats, noise)
    caps = profile.sorted_capabilities
    tail = profile.order[sol.l_star:]
    np.testing.assert_allclose(
        sol.powers[tail], stats.alpha * sol.eta / profile.magnitudes[tail] ** 2, rtol=1e-12
    )
    head = caps[: sol.l_star]
    eta = ((stats.alpha * np.sum(head**2) + noise.total) / (stats.alpha * np.sum(head))) ** 2
    assert sol.eta == pytest.approx(eta, rel=1e-12)
    at_peak = sol.powers >= profile.peak_powers
    np.testing.assert_array_equal(at_peak, profile.capabilities <= math.sqrt(sol.eta))


@settings(max_examples=100, deadline=None)
@given(seed=problem_seeds)
def test_full_power_structure_at_beta_zero(seed):
    profile, _, noise = random_problem(seed)
    stats = GradientStats(profile.alpha, 0.0)
    sol = solve(profile, stats, noise)
    s = profile.capabilities.sum()
    k = profile.device_count
    eta = ((profile.alpha * s**2 + noise.total) / (profile.alpha * k * s)) ** 2
    np.testing.assert_array_equal(sol.powers, profile.peak_powers)
    assert sol.eta == pytest.approx(eta, rel=1e-12)
    assert sol.l_star == k
    assert full_power_eta(profile, stats, noise) == pytest.approx(eta, rel=1e-12)


def test_extreme_finite_beta_approaches_limits():
    profile = fig3_profile(10.0)
    lo = solve(profile, GradientStats(FIG3_ALPHA, 1e-9), UNIT_NOISE)
    zero = solve(profile, GradientStats(FIG3_ALPHA, 0.0), UNIT_NOISE)
    hi = solve(profile, GradientStats(FIG3_ALPHA, 1e9), UNIT_NOISE)
    inf = solve(profile, GradientStats(FIG3_ALPHA, math.inf), UNIT_NOISE)
    np.testing.assert_allclose(lo.powers, zero.powers, rtol=1e-6)
    np.testing.assert_allclose(hi.powers, inf.powers, rtol=1e-6)
    assert hi.eta == pytest.approx(inf.eta, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=problem_seeds, c=st.sampled_from([0.1, 10.0]))
def test_alpha_invariance(seed, c):
    profile, stats, noise = random_problem(seed)
    sol = solve(profile, stats, noise)
    scaled = solve(profile.with_alpha(stats.alpha * c), stats.scaled(c), noise)
    np.testing.assert_allclose(scaled.powers, sol.powers, rtol=1e-9)
    assert scaled.eta == pytest.approx(sol.eta / c, rel=1e-9)


# sweeps


def fig3_sweep(snr_db, betas):
    profile = fig3_profile(snr_db)
    return profile, sweep_beta(profile, GradientStats(FIG3_ALPHA, 1.0), UNIT_NOISE, betas)


def test_sweep_endpoints_match_special_cases():
    betas = [0.0, 1.0, math.inf]
    profile, sols = fig3_sweep(10.0, betas)
    np.testing.assert_array_equal(sols[0].powers, profile.peak_powers)
    inf = solve(profile, GradientStats(FIG3_ALPHA, math.inf), UNIT_NOISE)
    np.testing.assert_array_equal(sols[-1].powers, inf.powers)


def test_sweep_requires_ascending_grid():
    with pytest.raises(ValueError):
        fig3_sweep(10.0, [1.0, 0.5])


@pytest.mark.parametrize("snr_db", [5.0, 10.0])
def test_powers_non_increasing_in_beta(snr_db):
    betas = [0.0] + list(np.geomspace(1e-3, 1e3, 400)) + [math.inf]
    _, sols = fig3_sweep(snr_db, betas)
    p = np.array([s.powers for s in sols])
    assert np.all(np.diff(p, axis=0) <= 1e-12 * p.max())


@pytest.mark.parametrize("snr_db", [5.0, 10.0])
def test_lstar_non_increasing_in_beta(snr_db):
    betas = [0.0] + list(np.geomspace(1e-3, 1e3, 400)) + [math.inf]
    _, sols = fig3_sweep(snr_db, betas)
    l = np.array([s.l_star for s in sols])
    assert np.all(np.diff(l) <= 0)
    assert l[0] == 6


def test_powers_non_decreasing_in_noise():
    profile = fig3_profile(10.0)
    stats = GradientStats(FIG3_ALPHA, 2.0)
    p = np.array([solve(profile, stats, NoiseSpec(v, 1)).powers for v in np.geomspace(0.01, 100, 200)])
    assert np.all(np.diff(p, axis=0) >= -1e-12 * p.max())


def test_sweep_continuity_under_refinement():
    jumps = []
    for step in (1.1, 1.01, 1.001):
        betas = list(1e-2 * step ** np.arange(int(math.log(1e4) / math.log(step)) + 1))
        profile, sols = fig3_sweep(10.0, betas)
        p = np.array([s.powers for s in sols])
        jumps.append(np.abs(np.diff(p, axis=0)).max() / profile.peak_powers.max())
    assert jumps[0] > jumps[1] > jumps[2]
    assert jumps[2] < 0.002


def test_sweep_rows_columns():
    betas = [0.0, 1.0, math.inf]
    _, sols = fig3_sweep(5.0, betas)
    rows = sweep_rows(betas, sols)
    assert list(rows[0]) == ["beta", "l_star", "p_1", "p_2", "p_3", "p_4", "p_5", "p_6", "eta", "mse_total"]
    assert rows[-1]["beta"] == math.inf


def test_threshold_candidate_levels():
    profile = fig3_profile(10.0)
    stats = GradientStats(FIG3_ALPHA, math.inf)
    cand = threshold_candidate(3, profile, stats, UNIT_NOISE)
    g = aggregation_levels(cand.powers, profile.magnitudes, cand.eta, FIG3_ALPHA)
    np.testing.assert_allclose(g[3:], 1.0, rtol=1e-12)
