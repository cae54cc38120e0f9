"""Named random streams derived from a single master seed.

Every stochastic ingredient of a run (channel draws, receiver noise,
mini-batch sampling, ...) gets its own generator keyed by
``(master_seed, purpose, iteration)``.  Changing how many numbers one
purpose consumes never shifts another purpose's draws, so schemes that
share a master seed see identical channels, batches and noise.
"""

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(master_seed: int, purpose: str, iteration: int = 0) -> np.random.Generator:
    if master_seed < 0 or iteration < 0:
        raise ValueError("master_seed and iteration must be non-negative")
    seq = np.random.SeedSequence([int(master_seed), purpose_key(purpose), int(iteration)])
    return np.random.default_rng(seq)
