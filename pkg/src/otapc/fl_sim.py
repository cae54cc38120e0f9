"""Federated learning over an AirComp uplink with adaptive power control.

A desk-scale stand-in for CNN training: multinomial logistic regression on a
seeded Gaussian-mixture dataset.  Every scheme shares the master seed, so for a
given seed all schemes see the same dataset, shards, mini-batches, channels and
receiver noise; they differ only in how powers and the denoising factor are
chosen.

Per round (one local SGD step per device):

1. devices compute mini-batch gradients and report their norms;
2. the server estimates alpha from the norms;
3. the server picks powers and eta for the scheme;
4. gradients are superposed over the air and recovered;
5. the server estimates beta for the next round from the recovered gradient;
6. the global model takes a step along the recovered gradient.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import rng as rngs
from .channel import AircompRound, NoiseSpec, aircomp_transmit, sample_rayleigh_channels
from .config import SCHEMES, TrainConfig
from .mse import mse_ab
from .optimizer import build_profile, full_power_eta, solve
from .stats import GradientStats, empirical_moments, estimate_alpha, estimate_beta, moments_to_stats


class SimulationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# learning task


@dataclass
class SyntheticTask:
    """Gaussian-mixture classification data with a bias column already appended."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    @property
    def n_inputs(self) -> int:
        return self.x_train.shape[1]


def make_task(
    n_samples: int, n_features: int, n_classes: int, separation: float, test_fraction: float, seed
) -> SyntheticTask:
    """Balanced Gaussian mixture with per-feature scales and a stratified split."""
    rng = np.random.default_rng(seed)
    per_class = n_samples // n_classes
    if per_class < 2:
        raise ValueError("too few samples for the number of classes")
    means = rng.standard_normal((n_classes, n_features)) * separation
    scales = rng.uniform(0.5, 1.5, n_features)
    n_test = int(round(per_class * test_fraction))
    xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
    for c in range(n_classes):
        x = means[c] + rng.standard_normal((per_class, n_features))
        x = x * scales
        xs_te.append(x[:n_test])
        xs_tr.append(x[n_test:])
        ys_te.append(np.full(n_test, c))
        ys_tr.append(np.full(per_class - n_test, c))
    ones = lambda a: np.hstack([a, np.ones((a.shape[0], 1))])  # noqa: E731
    x_train, y_train = ones(np.vstack(xs_tr)), np.concatenate(ys_tr)
    perm = rng.permutation(y_train.size)
    return SyntheticTask(
        x_train[perm], y_train[perm], ones(np.vstack(xs_te)), np.concatenate(ys_te), n_classes
    )


def task_for(config: TrainConfig, seed: int) -> SyntheticTask:
    return make_task(
        config.n_samples,
        config.n_features,
        config.n_classes,
        config.class_separation,
        config.test_fraction,
        rngs.stream(seed, "data"),
    )


class SoftmaxRegression:
    """Multinomial logistic regression; weights are flattened (inputs x classes)."""

    def __init__(self, n_inputs: int, n_classes: int):
        self.n_inputs = n_inputs
        self.n_classes = n_classes

    @property
    def dimension(self) -> int:
        return self.n_inputs * self.n_classes

    def _probs(self, w, x):
        z = x @ w.reshape(self.n_inputs, self.n_classes)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def loss(self, w, x, y) -> float:
        p = self._probs(w, x)
        return float(-np.mean(np.log(p[np.arange(y.size), y] + 1e-300)))

    def gradient(self, w, x, y) -> np.ndarray:
        r = self._probs(w, x)
        r[np.arange(y.size), y] -= 1.0
        return (x.T @ r / y.size).ravel()

    def batch_gradients(self, w, xb, yb) -> np.ndarray:
        """Gradients for stacked batches: xb (n, B, inputs), yb (n, B) -> (n, D)."""
        r = self._probs(w, xb)
        n, b = yb.shape
        r[np.arange(n)[:, None], np.arange(b)[None, :], yb] -= 1.0
        return np.einsum("nbi,nbc->nic", xb, r).reshape(n, -1) / b

    def accuracy(self, w, x, y) -> float:
        z = x @ w.reshape(self.n_inputs, self.n_classes)
        return float(np.mean(np.argmax(z, axis=1) == y))


class LeastSquares:
    """0.5 * mean (x.w - y)^2; convex quadratic used to check the SGD plumbing."""

    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs

    @property
    def dimension(self) -> int:
        return self.n_inputs

    def loss(self, w, x, y) -> float:
        return float(0.5 * np.mean((x @ w - y) ** 2))

    def gradient(self, w, x, y) -> np.ndarray:
        return x.T @ (x @ w - y) / y.size


# ---------------------------------------------------------------------------
# data partitioning and local computation


def partition_data(task: SyntheticTask, device_count: int, mode: str, seed) -> list[np.ndarray]:
    """Split training indices into disjoint device shards.

    ``iid``: a random permutation cut into equal shards.  ``noniid``: indices
    sorted by label, cut into ``2K`` shards, two random shards per device.
    """
    labels = task.y_train
    n = labels.size
    rng = np.random.default_rng(seed)
    if mode == "iid":
        if n < device_count:
            raise ValueError(f"{n} samples cannot fill {device_count} shards")
        return [np.sort(s) for s in np.array_split(rng.permutation(n), device_count)]
    if mode == "noniid":
        n_shards = 2 * device_count
        if n < n_shards:
            raise ValueError(f"{n} samples cannot fill {n_shards} label-sorted shards")
        by_label = np.argsort(labels, kind="stable")
        shards = np.array_split(by_label, n_shards)
        assign = rng.permutation(n_shards).reshape(device_count, 2)
        return [np.sort(np.concatenate([shards[i] for i in pair])) for pair in assign]
    raise ValueError(f"unknown partition mode {mode!r}")


def local_sgd_gradient(model, weights, x, y, batch_size: int, seed) -> tuple[np.ndarray, float]:
    """One mini-batch gradient on a device shard and its Euclidean norm."""
    if y.size == 0:
        raise ValueError("empty shard")
    rng = np.random.default_rng(seed)
    b = min(batch_size, y.size)
    idx = rng.choice(y.size, size=b, replace=False)
    g = model.gradient(weights, x[idx], y[idx])
    return g, float(np.linalg.norm(g))


def sample_true_stats(
    model, weights, task: SyntheticTask, shards: Sequence[np.ndarray], batch_size: int, n: int, seed
) -> GradientStats:
    """(alpha, beta) of a device's mini-batch gradient at ``weights``.

    The device is drawn uniformly, matching the server-side view that device
    gradients are identically distributed.
    """
    rng = np.random.default_rng(seed)
    devices = rng.integers(len(shards), size=n)
    picks = np.stack(
        [shards[d][rng.choice(shards[d].size, size=min(batch_size, shards[d].size), replace=False)]
         for d in devices]
    )
    grads = model.batch_gradients(weights, task.x_train[picks], task.y_train[picks])
    return moments_to_stats(empirical_moments(grads))


# ---------------------------------------------------------------------------
# rounds


@dataclass
class RoundTrace:
    scheme: str
    t: int
    alpha_hat: float
    beta_hat: float
    beta_hat_infinite: bool
    alpha_used: float
    beta_used: float
    powers: list
    eta: float
    l_star: int
    mse_analytic: float
    recovered_norm: float
    train_loss: float
    test_accuracy: float
    alpha_true: float = math.nan
    beta_true: float = math.nan

    def as_dict(self) -> dict:
        d = asdict(self)
        for key, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[key] = "inf"
            elif isinstance(v, float) and math.isnan(v):
                d[key] = None
        return d


@dataclass
class FLState:
    weights: np.ndarray
    beta_hat: float
    t: int = 1


@dataclass
class FederatedSimulation:
    """Data, shards and model for one master seed; rounds are run per scheme."""

    config: TrainConfig
    seed: int
    task: SyntheticTask = field(init=False)
    shards: list = field(init=False)
    model: SoftmaxRegression = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.task = task_for(cfg, self.seed)
        self.shards = partition_data(
            self.task, cfg.device_count, cfg.partition, rngs.stream(self.seed, "partition")
        )
        self.model = SoftmaxRegression(self.task.n_inputs, cfg.n_classes)
        self.noise = NoiseSpec(cfg.noise_variance, self.model.dimension)

    def initial_state(self) -> FLState:
        return FLState(np.zeros(self.model.dimension), self.config.beta_init)

    def channels(self, t: int):
        cfg = self.config
        it = 0 if cfg.freeze_channels else t
        return sample_rayleigh_channels(
            cfg.device_count, rngs.stream(self.seed, "channel", it), cfg.peak_power
        )

    def device_gradients(self, w, t: int) -> tuple[np.ndarray, np.ndarray]:
        r = rngs.stream(self.seed, "batch", t)
        grads, norms = [], []
        for idx in self.shards:
            g, b = local_sgd_gradient(
                self.model, w, self.task.x_train[idx], self.task.y_train[idx], self.config.batch_size, r
            )
            grads.append(g)
            norms.append(b)
        return np.stack(grads), np.array(norms)

    def true_stats(self, w, t: int) -> GradientStats:
        return sample_true_stats(
            self.model, w, self.task, self.shards, self.config.batch_size,
            self.config.stat_samples, rngs.stream(self.seed, "stats", t),
        )

    def run_round(self, state: FLState, scheme: str) -> RoundTrace:
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        cfg, t, w = self.config, state.t, state.weights
        k = cfg.device_count
        grads, norms = self.device_gradients(w, t)
        alpha_hat = estimate_alpha(norms)

        need_true = scheme == "known_stats" or cfg.track_stats
        true = self.true_stats(w, t) if need_true else None

        powers = np.zeros(k)
        eta, l_star, mse = math.nan, 0, 0.0
        used = None
        if scheme == "error_free" or alpha_hat == 0:
            g_hat = grads.mean(axis=0)
        else:
            used = {
                "adaptive": GradientStats(alpha_hat, state.beta_hat),
                "full_power": GradientStats(alpha_hat, state.beta_hat),
                "threshold_beta_inf": GradientStats(alpha_hat, math.inf),
                "known_stats": true,
            }[scheme]
            chans = self.channels(t)
            try:
                profile = build_profile(chans, used.alpha)
                if scheme == "full_power":
                    powers = profile.peak_powers.copy()
                    eta, l_star = full_power_eta(profile, used, self.noise), k
                else:
                    sol = solve(profile, used, self.noise)
                    powers, eta, l_star = sol.powers, sol.eta, sol.l_star
            except ValueError as exc:
                raise SimulationError(f"round {t} ({scheme}): {exc}") from exc
            mse = mse_ab(used, powers, chans, eta, self.noise, scaled=True).total
            rnd = AircompRound(grads, powers, eta, np.full(k, used.alpha), chans)
            g_hat = aircomp_transmit(rnd, self.noise, rngs.stream(self.seed, "noise", t))

        if not np.all(np.isfinite(g_hat)):
            raise SimulationError(f"round {t} ({scheme}): recovered gradient is not finite")
        beta_next = estimate_beta(alpha_hat, g_hat) if alpha_hat > 0 else math.inf
        beta_hat_now = state.beta_hat
        state.weights = w - cfg.learning_rate * g_hat
        state.beta_hat = beta_next
        state.t = t + 1

        return RoundTrace(
            scheme=scheme,
            t=t,
            alpha_hat=alpha_hat,
            beta_hat=beta_hat_now,
            beta_hat_infinite=math.isinf(beta_hat_now),
            alpha_used=used.alpha if used else alpha_hat,
            beta_used=used.beta if used else math.nan,
            powers=[float(p) for p in powers],
            eta=float(eta),
            l_star=int(l_star),
            mse_analytic=float(mse),
            recovered_norm=float(np.linalg.norm(g_hat)),
            train_loss=self.model.loss(state.weights, self.task.x_train, self.task.y_train),
            test_accuracy=self.model.accuracy(state.weights, self.task.x_test, self.task.y_test),
            alpha_true=true.alpha if true else math.nan,
            beta_true=true.beta if true else math.nan,
        )

    def run(self, scheme: str) -> list[RoundTrace]:
        state = self.initial_state()
        return [self.run_round(state, scheme) for _ in range(self.config.rounds)]


def run_round(state: FLState, config: TrainConfig, scheme: str, sim: FederatedSimulation | None = None):
    """Advance ``state`` by one round of ``scheme``; builds the simulation if not given."""
    sim = sim or FederatedSimulation(config, config.master_seed)
    return sim.run_round(state, scheme)


@dataclass
class ExperimentResult:
    traces: list
    summary: dict


def summarize(traces: Sequence[RoundTrace]) -> dict:
    out = {}
    for scheme in dict.fromkeys(tr.scheme for tr in traces):
        rows = [tr for tr in traces if tr.scheme == scheme]
        last = rows[-1]
        out[scheme] = {
            "rounds": len(rows),
            "final_train_loss": last.train_loss,
            "final_test_accuracy": last.test_accuracy,
            "mean_mse_analytic": float(np.mean([r.mse_analytic for r in rows])),
        }
    return out


def run_experiment(config: TrainConfig, seed: int | None = None) -> ExperimentResult:
    """All configured schemes on one master seed; deterministic given the seed."""
    seed = config.master_seed if seed is None else seed
    sim = FederatedSimulation(config, seed)
    traces = []
    for scheme in config.schemes:
        traces.extend(sim.run(scheme))
    return ExperimentResult(traces, summarize(traces))


def final_accuracies(config: TrainConfig, seeds: Sequence[int]) -> dict[str, np.ndarray]:
    """Final test accuracy per scheme, one entry per seed."""
    acc = {s: [] for s in config.schemes}
    for seed in seeds:
        res = run_experiment(config, seed)
        for s in config.schemes:
            acc[s].append(res.summary[s]["final_test_accuracy"])
    return {s: np.array(v) for s, v in acc.items()}


def stats_trajectory(config: TrainConfig, seeds: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """True (alpha, beta) at every round of error-free training, shape (n_seeds, T) each."""
    cfg = replace(config, schemes=("error_free",), track_stats=True)
    alphas, betas = [], []
    for seed in seeds:
        traces = FederatedSimulation(cfg, seed).run("error_free")
        alphas.append([tr.alpha_true for tr in traces])
        betas.append([tr.beta_true for tr in traces])
    return np.array(alphas), np.array(betas)


def window_means(series: np.ndarray, window: int) -> np.ndarray:
    """Means over consecutive non-overlapping windows; a short last window is dropped."""
    series = np.asarray(series, dtype=float)
    n = series.shape[-1] // window
    if n < 1:
        raise ValueError(f"series of length {series.shape[-1]} is shorter than window {window}")
    return series[..., : n * window].reshape(*series.shape[:-1], n, window).mean(axis=-1)
