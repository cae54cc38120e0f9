import math

import numpy as np
import pytest

from otapc.channel import AircompRound, DeviceChannel, NoiseSpec, aircomp_transmit
from otapc.stats import sample_gradients


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_channels(magnitudes, peak_power=1.0, phases=None):
    phases = np.zeros(len(magnitudes)) if phases is None else phases
    peaks = np.broadcast_to(np.asarray(peak_power, dtype=float), (len(magnitudes),))
    return [DeviceChannel(float(m), float(t), float(p)) for m, t, p in zip(magnitudes, phases, peaks)]


UNIT_NOISE = NoiseSpec(1.0, 1)


def monte_carlo_mse(moments, powers, channels, eta, noise_variance, n_draws, seed):
    """Mean and standard error of |g_hat - g|^2, drawing every sample through the transmit chain.

    Draws are stacked along the gradient axis so one call covers all of them.
    """
    k, d = len(channels), moments.dimension
    alpha = moments.variance_energy + moments.mean_energy
    g = sample_gradients(moments, k * n_draws, seed).reshape(k, n_draws * d)
    rnd = AircompRound(g, powers, eta, alpha, channels)
    g_hat = aircomp_transmit(rnd, NoiseSpec(noise_variance, n_draws * d), seed + 1)
    err = np.sum(((g_hat - g.mean(axis=0)) ** 2).reshape(n_draws, d), axis=1)
    return err.mean(), err.std(ddof=1) / math.sqrt(n_draws)


# acceptance results: criterion -> list of (check, passed, detail)
ACCEPTANCE: dict[int, list] = {}


def record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = "; ".join(f"{name}: {'ok' if ok else 'FAILED'}{f' ({d})' if d else ''}" for name, ok, d in checks)
        terminalreporter.write_line(f"criterion {c:2d}: {status} | {parts}")
