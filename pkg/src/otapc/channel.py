"""Block-fading uplink channels and the AirComp transmit/recover chain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DeviceChannel:
    """Channel seen by one device during one time block.

    ``magnitude`` and ``phase`` describe the complex coefficient
    ``h = magnitude * exp(1j * phase)``; ``peak_power`` is the device budget.
    """

    magnitude: float
    phase: float = 0.0
    peak_power: float = 1.0

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ValueError(f"channel magnitude must be >= 0, got {self.magnitude}")
        if not self.peak_power > 0:
            raise ValueError(f"peak power must be > 0, got {self.peak_power}")
        if not -math.pi <= self.phase < math.pi:
            raise ValueError(f"phase must lie in [-pi, pi), got {self.phase}")

    @property
    def coefficient(self) -> complex:
        return self.magnitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class NoiseSpec:
    variance: float
    dimension: int

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension}")

    @property
    def total(self) -> float:
        """D * sigma_n^2, the noise energy over one gradient block."""
        return self.dimension * self.variance


@dataclass
class AircompRound:
    """Everything the devices and the server commit to for one AirComp slot block.

    ``gradients`` has shape (K, D); ``alphas`` are the per-device
    normalisers used in the pre-processing factor.
    """

    gradients: np.ndarray
    powers: np.ndarray
    denoising_factor: float
    alphas: np.ndarray
    channels: Sequence[DeviceChannel]

    def __post_init__(self):
        self.gradients = np.atleast_2d(np.asarray(self.gradients, dtype=float))
        k = self.gradients.shape[0]
        self.powers = np.asarray(self.powers, dtype=float).reshape(-1)
        self.alphas = np.broadcast_to(np.asarray(self.alphas, dtype=float), (k,)).copy()
        if len(self.channels) != k or self.powers.size != k:
            raise ValueError(
                f"got {k} gradients, {self.powers.size} powers and {len(self.channels)} channels"
            )
        if np.any(self.powers < 0):
            raise ValueError("transmit powers must be non-negative")
        peak = np.array([c.peak_power for c in self.channels])
        if np.any(self.powers > peak * (1 + 1e-9)):
            raise ValueError("transmit power exceeds the peak budget")
        if not self.denoising_factor > 0:
            raise ValueError(f"denoising factor must be > 0, got {self.denoising_factor}")


def magnitudes_of(channels) -> np.ndarray:
    """|h_k| from a sequence of DeviceChannel or a plain array of magnitudes."""
    if len(channels) and isinstance(channels[0], DeviceChannel):
        return np.array([c.magnitude for c in channels], dtype=float)
    return np.asarray(channels, dtype=float).reshape(-1)


def peak_powers_of(channels: Sequence[DeviceChannel]) -> np.ndarray:
    return np.array([c.peak_power for c in channels], dtype=float)


def sample_rayleigh_channels(
    count: int, rng_seed, peak_power: float | Sequence[float] = 1.0
) -> list[DeviceChannel]:
    """Draw ``count`` IID unit-variance circularly-symmetric complex Gaussian channels.

    ``rng_seed`` is anything :func:`numpy.random.default_rng` accepts,
    including an existing Generator.
    """
    if int(count) != count or count < 1:
        raise ValueError(f"need at least one device, got count={count}")
    rng = np.random.default_rng(rng_seed)
    z = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / math.sqrt(2.0)
    phase = np.angle(z)
    phase[phase >= math.pi] -= 2 * math.pi
    peaks = np.broadcast_to(np.asarray(peak_power, dtype=float), (count,))
    return [
        DeviceChannel(float(m), float(ph), float(p))
        for m, ph, p in zip(np.abs(z), phase, peaks)
    ]


def with_peak_power(channels: Sequence[DeviceChannel], peak_power) -> list[DeviceChannel]:
    peaks = np.broadcast_to(np.asarray(peak_power, dtype=float), (len(channels),))
    return [DeviceChannel(c.magnitude, c.phase, float(p)) for c, p in zip(channels, peaks)]


def aircomp_transmit(rnd: AircompRound, noise: NoiseSpec, rng_seed) -> np.ndarray:
    """Superpose the pre-processed gradients over the air and recover their average.

    Each device scales its gradient by ``b_k = sqrt(p_k / alpha_k) * exp(-1j*theta_k)``
    so the channel phase cancels; the server divides the received block by
    ``K * sqrt(eta)``.  Receiver noise is real Gaussian with variance
    ``noise.variance`` per entry.
    """
    g = rnd.gradients
    k, d = g.shape
    if d != noise.dimension:
        raise ValueError(f"gradient dimension {d} != noise dimension {noise.dimension}")
    active = rnd.powers > 0
    bad = (rnd.alphas <= 0) & active & np.any(g != 0, axis=1)
    if np.any(bad):
        raise ValueError(f"alpha_k must be > 0 for transmitting devices {np.flatnonzero(bad)}")

    amp = np.zeros(k)
    ok = rnd.alphas > 0
    amp[ok] = np.sqrt(rnd.powers[ok] / rnd.alphas[ok])
    h = np.array([c.coefficient for c in rnd.channels])
    phase = np.array([c.phase for c in rnd.channels])
    b = amp * np.exp(-1j * phase)
    # after compensation h*b is real up to rounding; keep the real baseband part
    effective = (h * b).real

    rng = np.random.default_rng(rng_seed)
    n = rng.standard_normal(d) * math.sqrt(noise.variance)
    y = effective @ g + n
    return y / (k * math.sqrt(rnd.denoising_factor))
