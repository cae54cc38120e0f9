import math
import warnings

import numpy as np
import pytest

from otapc.channel import NoiseSpec
from otapc.optimizer import build_profile, candidate_for_subregion, solve
from otapc.oracle import compare_with_oracle, oracle_solve, oracle_value, random_instance
from otapc.mse import mse_ab
from otapc.stats import GradientStats

from conftest import UNIT_NOISE, make_channels


def test_single_device_matches_closed_form():
    for beta in (0.3, 3.0, math.inf):
        profile = build_profile(make_channels([0.8], peak_power=4.0), 1.0)
        stats = GradientStats(1.0, beta)
        ref = oracle_solve(profile, stats, UNIT_NOISE)
        sol = solve(profile, stats, UNIT_NOISE)
        assert ref.powers[0] == pytest.approx(4.0, rel=1e-6)
        assert ref.mse.total == pytest.approx(sol.mse.total, rel=1e-9)


def test_single_device_against_1d_grid():
    profile = build_profile(make_channels([0.8], peak_power=4.0), 1.0)
    stats = GradientStats(1.0, 2.0)
    u = np.linspace(1e-4, 5, 200_001)
    grid = [mse_ab(stats, [4.0], [0.8], 1 / x**2, UNIT_NOISE).total for x in u[::100]]
    ref = oracle_solve(profile, stats, UNIT_NOISE)
    assert ref.mse.total <= min(grid) * (1 + 1e-9)


def test_beta_zero_full_power():
    profile = build_profile(make_channels([1.0, 2.0], peak_power=1.0), 1.0)
    ref = oracle_solve(profile, GradientStats(1.0, 0.0), UNIT_NOISE)
    np.testing.assert_allclose(ref.powers, [1.0, 1.0], rtol=1e-6)
    assert ref.eta == pytest.approx(25 / 9, rel=1e-4)


def test_oracle_value_matches_mse():
    inst = random_instance(4, 3)
    p = inst.profile.peak_powers * 0.3
    assert oracle_value(inst.profile, inst.stats, inst.noise, p, 2.5) == pytest.approx(
        mse_ab(inst.stats, p, inst.profile.magnitudes, 2.5, inst.noise).total, rel=1e-12
    )


def test_budget_exhaustion_warns():
    inst = random_instance(3, 0)
    with pytest.warns(RuntimeWarning, match="budget"):
        ref = oracle_solve(inst.profile, inst.stats, inst.noise, budget=10)
    assert not ref.converged


def test_random_instance_is_reproducible():
    a, b = random_instance(3, 5, 1), random_instance(3, 5, 1)
    np.testing.assert_array_equal(a.profile.magnitudes, b.profile.magnitudes)
    assert a.stats == b.stats


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_solver_matches_oracle(k):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for trial in range(8):
            row = compare_with_oracle(random_instance(k, trial))
            assert row["mse_solve"] <= row["mse_oracle"] * (1 + 1e-6)
            assert abs(row["rel_gap"]) <= 1e-6
            assert row["l_star"] == row["l_star_interval"]


def test_illegal_subregions_exclude_the_optimum():
    checked = 0
    for trial in range(30):
        inst = random_instance(3, trial)
        ref = oracle_solve(inst.profile, inst.stats, inst.noise)
        for l in range(1, 3):
            if not candidate_for_subregion(l, inst.profile, inst.stats, inst.noise).legal:
                assert ref.l_star != l
                checked += 1
    assert checked > 0
