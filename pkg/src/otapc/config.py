"""Experiment configuration: dataclasses plus a strict JSON loader.

Defaults
--------

=====================  ==================  =========================================
key                    default             meaning
=====================  ==================  =========================================
*TrainConfig* (fl-run, fig2-stats, snr-sweep, device-sweep)
-----------------------------------------------------------------------------------
device_count           10                  K, devices per round
dimension              500                 D = (features + 1) * n_classes
n_classes              10                  classes in the Gaussian mixture
n_samples              5000                total samples (train + test)
test_fraction          0.2                 held-out share for test accuracy
class_separation       0.35                spread of the class means
learning_rate          0.25                gamma
batch_size             10                  B, local mini-batch size
rounds                 200                 T
snr_db                 10.0                P_k / (D sigma_n^2) in dB
noise_variance         1.0                 sigma_n^2
partition              "noniid"            "iid" or "noniid"
schemes                all five            subset of SCHEMES, run on shared seeds
master_seed            0                   root of all random streams
beta_init              1.0                 initial SMCV estimate
stat_samples           200                 mini-batch draws behind the "true" stats
freeze_channels        false               reuse one channel draw for every round
track_stats            false               record true (alpha, beta) every round
n_seeds                20                  seeds for multi-seed commands
snr_grid_db            [0, 5, 10, 15, 20]  snr-sweep grid
device_grid            [4, 10, 20, 30]     device-sweep grid
*SweepConfig* (sweep-beta, solve-once)
-----------------------------------------------------------------------------------
magnitudes             Fig.-3 channels     |h_k|
snr_db                 [5.0, 10.0]         one output per entry
alpha                  0.25                gradient MSN
dimension              1                   D
noise_variance         1.0                 sigma_n^2
beta                   1.0                 solve-once only; "inf" allowed
beta_min / beta_max    1e-3 / 1e3          sweep-beta grid ends
beta_step              1.01                multiplicative grid step
include_limits         true                add beta = 0 and beta = inf rows
*OracleConfig* (oracle-check)
-----------------------------------------------------------------------------------
k                      3                   devices per instance
trials                 100                 random instances
beta_range             [0.01, 100]         log-uniform beta
snr_range_db           [0, 20]             uniform SNR
restarts               50                  oracle random starts
tolerance              1e-6                max allowed relative MSE gap
master_seed            0
=====================  ==================  =========================================
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

SCHEMES = ("adaptive", "known_stats", "threshold_beta_inf", "full_power", "error_free")
PARTITIONS = ("iid", "noniid")
FIG3_MAGNITUDES = (0.50, 0.82, 0.85, 1.16, 2.09, 2.83)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    device_count: int = 10
    dimension: int = 500
    n_classes: int = 10
    n_samples: int = 5000
    test_fraction: float = 0.2
    class_separation: float = 0.35
    learning_rate: float = 0.25
    batch_size: int = 10
    rounds: int = 200
    snr_db: float = 10.0
    noise_variance: float = 1.0
    partition: str = "noniid"
    schemes: tuple = SCHEMES
    master_seed: int = 0
    beta_init: float = 1.0
    stat_samples: int = 200
    freeze_channels: bool = False
    track_stats: bool = False
    n_seeds: int = 20
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    device_grid: tuple = (4, 10, 20, 30)

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        self.device_grid = tuple(int(k) for k in self.device_grid)
        checks = [
            (self.device_count >= 1, "device_count", "must be >= 1"),
            (self.rounds >= 1, "rounds", "must be >= 1"),
            (self.learning_rate > 0, "learning_rate", "must be > 0"),
            (self.batch_size >= 1, "batch_size", "must be >= 1"),
            (self.n_classes >= 2, "n_classes", "must be >= 2"),
            (self.dimension % self.n_classes == 0 and self.dimension // self.n_classes >= 2,
             "dimension", "must be a multiple of n_classes with at least one feature"),
            (0 < self.test_fraction < 1, "test_fraction", "must lie in (0, 1)"),
            (self.noise_variance >= 0, "noise_variance", "must be >= 0"),
            (self.partition in PARTITIONS, "partition", f"must be one of {PARTITIONS}"),
            (len(self.schemes) > 0 and all(s in SCHEMES for s in self.schemes),
             "schemes", f"entries must come from {SCHEMES}"),
            (self.master_seed >= 0, "master_seed", "must be >= 0"),
            (self.beta_init >= 0, "beta_init", "must be >= 0"),
            (self.stat_samples >= 2, "stat_samples", "must be >= 2"),
            (self.n_seeds >= 1, "n_seeds", "must be >= 1"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")

    @property
    def n_features(self) -> int:
        return self.dimension // self.n_classes - 1

    @property
    def peak_power(self) -> float:
        """P_k = 10^(SNR/10) * D * sigma_n^2."""
        return 10 ** (self.snr_db / 10) * self.dimension * self.noise_variance


@dataclass
class SweepConfig:
    magnitudes: tuple = FIG3_MAGNITUDES
    snr_db: tuple = (5.0, 10.0)
    alpha: float = 0.25
    dimension: int = 1
    noise_variance: float = 1.0
    beta: float = 1.0
    beta_min: float = 1e-3
    beta_max: float = 1e3
    beta_step: float = 1.01
    include_limits: bool = True

    def __post_init__(self):
        self.magnitudes = tuple(float(h) for h in self.magnitudes)
        self.snr_db = tuple(float(s) for s in self.snr_db)
        checks = [
            (len(self.magnitudes) >= 1 and min(self.magnitudes) >= 0, "magnitudes",
             "need at least one non-negative magnitude"),
            (len(self.snr_db) >= 1, "snr_db", "need at least one SNR"),
            (self.alpha > 0, "alpha", "must be > 0"),
            (self.dimension >= 1, "dimension", "must be >= 1"),
            (self.noise_variance >= 0, "noise_variance", "must be >= 0"),
            (self.beta >= 0, "beta", "must be >= 0 or \"inf\""),
            (0 < self.beta_min < self.beta_max, "beta_min", "need 0 < beta_min < beta_max"),
            (self.beta_step > 1, "beta_step", "must be > 1"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")

    def peak_power(self, snr_db: float) -> float:
        return 10 ** (snr_db / 10) * self.dimension * self.noise_variance

    def beta_grid(self) -> list[float]:
        n = int(math.floor(math.log(self.beta_max / self.beta_min) / math.log(self.beta_step)))
        grid = [self.beta_min * self.beta_step**i for i in range(n + 1)]
        if self.include_limits:
            grid = [0.0] + grid + [math.inf]
        return grid


@dataclass
class OracleConfig:
    k: int = 3
    trials: int = 100
    beta_range: tuple = (0.01, 100.0)
    snr_range_db: tuple = (0.0, 20.0)
    restarts: int = 50
    tolerance: float = 1e-6
    master_seed: int = 0

    def __post_init__(self):
        self.beta_range = tuple(float(b) for b in self.beta_range)
        self.snr_range_db = tuple(float(s) for s in self.snr_range_db)
        checks = [
            (self.k >= 1, "k", "must be >= 1"),
            (self.trials >= 1, "trials", "must be >= 1"),
            (len(self.beta_range) == 2 and 0 < self.beta_range[0] <= self.beta_range[1],
             "beta_range", "need [low, high] with 0 < low <= high"),
            (len(self.snr_range_db) == 2 and self.snr_range_db[0] <= self.snr_range_db[1],
             "snr_range_db", "need [low, high]"),
            (self.restarts >= 1, "restarts", "must be >= 1"),
            (self.tolerance > 0, "tolerance", "must be > 0"),
            (self.master_seed >= 0, "master_seed", "must be >= 0"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")


CONFIG_FOR_COMMAND = {
    "sweep-beta": SweepConfig,
    "solve-once": SweepConfig,
    "oracle-check": OracleConfig,
    "fl-run": TrainConfig,
    "fig2-stats": TrainConfig,
    "snr-sweep": TrainConfig,
    "device-sweep": TrainConfig,
}


def _coerce(key: str, value, default):
    """Check ``value`` against the type of the field default; return the coerced value."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if value == "inf":
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        proto = default[0] if default else value[0] if value else None
        return tuple(_coerce(f"{key}[{i}]", v, proto) for i, v in enumerate(value))
    raise ConfigError(f"{key}: unsupported field type")  # pragma: no cover


def config_from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} (allowed: {', '.join(sorted(fields))})")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kwargs[key] = _coerce(key, value, default)
    return cls(**kwargs)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = [("inf" if isinstance(x, float) and math.isinf(x) else x) for x in v]
        elif isinstance(v, float) and math.isinf(v):
            v = "inf"
        out[f.name] = v
    return out


def load_config(path, command: str = "fl-run"):
    """Parse a JSON config for ``command``; unknown keys and wrong types are errors."""
    if command not in CONFIG_FOR_COMMAND:
        raise ConfigError(f"unknown command {command!r}")
    cls = CONFIG_FOR_COMMAND[command]
    if path is None:
        return cls()
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(cls, data)


def dump_config(cfg, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")

