"""Round-by-round simulator for importance-aware wireless data acquisition.

One round: device dynamics (buffer refresh, user replacement), fresh fading
draws, broadcast of a possibly compressed evaluation model, importance
feedback, the scheduling grant, analog transmission of the chosen sample,
and an incremental refit of the server model on everything decoded so far.

Random streams are split per concern (partitioning, dynamics, channel,
decoding noise, scheduling) so that runs differing only in the scheduling
policy see identical data shards, fading blocks and noise draws.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelRealization, receive_snr, sample_fading, transmit_and_decode
from .dataio import Dataset, partition_devices
from .importance import (
    CompressionSpec,
    compress_model,
    dii_generic,
    dii_labeled,
    dii_multiclass,
    dii_unlabeled,
)
from .probcls import OptimizerConfig, SoftmaxClassifier, fit_incremental
from .scheduler import DeviceReport, Policy, schedule
from .svm import SvmConfig, fit_binary, fit_multiclass, predict_multiclass


@dataclass(frozen=True)
class SimConfig:
    """Full experiment description; see ``validate`` for the legal ranges."""

    device_count: int = 10
    buffer_size: int = 10
    refresh_per_slot: int = 1
    replaced_users_per_slot: int = 0
    transmit_power: float = 10.0**1.5
    noise_variance: float = 1.0
    budget: int = 100
    policy: Policy = Policy.IMPORTANCE_AWARE
    learner: str = "svm"
    compression_ratio: float = 1.0
    seed: int = 0
    initial_per_class: int = 2
    hidden_units: int = 0
    retrain_stride: int = 1
    eval_stride: int = 1
    svm: SvmConfig = field(default_factory=SvmConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    @property
    def transmit_snr(self) -> float:
        return self.transmit_power / self.noise_variance

    def validate(self) -> None:
        if self.device_count < 1:
            raise ValueError("device_count must be at least 1")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be at least 1")
        if self.refresh_per_slot < 0:
            raise ValueError("refresh_per_slot cannot be negative")
        if not 0 <= self.replaced_users_per_slot <= self.device_count:
            raise ValueError("replaced_users_per_slot must lie in 0..device_count")
        if not self.transmit_power > 0.0:
            raise ValueError("transmit_power must be positive")
        if not self.noise_variance > 0.0:
            raise ValueError("noise_variance must be positive")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.learner not in ("svm", "logistic"):
            raise ValueError(f"unknown learner {self.learner!r}")
        if not 0.0 < self.compression_ratio <= 1.0:
            raise ValueError("compression_ratio must lie in (0, 1]")
        if self.retrain_stride < 1 or self.eval_stride < 1:
            raise ValueError("strides must be at least 1")
        if self.policy in (Policy.IMPORTANCE_AWARE, Policy.LABELED_IMPORTANCE) and self.learner != "svm":
            raise ValueError(f"{self.policy.value} scheduling requires the svm learner")
        if self.policy is Policy.GENERIC_IMPORTANCE and self.learner != "logistic":
            raise ValueError("generic-importance scheduling requires the logistic learner")


@dataclass
class RoundLog:
    round_index: int
    device_id: int
    buffer_slot: int
    receive_snr: float
    dii_values: dict[int, float | None]
    accuracy: float


@dataclass
class TrialResult:
    accuracies: np.ndarray
    logs: list[RoundLog]
    fresh_draws: int
    exhausted: bool


@dataclass
class _Device:
    device_id: int
    shard: Dataset
    pool: np.ndarray
    pool_pos: int = 0
    slots: list[int] = field(default_factory=list)
    ages: list[int] = field(default_factory=list)
    stamp: int = 0
    warned: bool = False

    def draw(self, count: int) -> list[int]:
        take = min(count, len(self.pool) - self.pool_pos)
        drawn = self.pool[self.pool_pos : self.pool_pos + take]
        self.pool_pos += take
        return list(drawn)

    def insert(self, indices: list[int], capacity: int) -> None:
        for idx in indices:
            if len(self.slots) < capacity:
                self.slots.append(idx)
                self.ages.append(self.stamp)
            else:
                oldest = int(np.argmin(self.ages))
                self.slots[oldest] = idx
                self.ages[oldest] = self.stamp
            self.stamp += 1

    def features(self) -> np.ndarray:
        return self.shard.features[self.slots]

    def labels(self) -> np.ndarray:
        return self.shard.labels[self.slots]


class Simulation:
    """One trial: fixed data partition, ``cfg.budget`` scheduling rounds."""

    def __init__(
        self,
        cfg: SimConfig,
        train: Dataset,
        test: Dataset,
        seed_seq: np.random.SeedSequence | None = None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.test = test
        if seed_seq is None:
            seed_seq = np.random.SeedSequence(cfg.seed)
        keys = seed_seq.spawn(6)
        self._rng_partition = np.random.default_rng(keys[0])
        self._rng_dynamics = np.random.default_rng(keys[1])
        self._rng_channel = np.random.default_rng(keys[2])
        self._rng_noise = np.random.default_rng(keys[3])
        self._rng_sched = np.random.default_rng(keys[4])
        self._rng_model = np.random.default_rng(keys[5])

        self.binary = train.class_count == 2
        if cfg.policy is Policy.LABELED_IMPORTANCE and not self.binary:
            raise ValueError("labeled-importance scheduling is defined for binary tasks")
        if cfg.learner == "svm" and not self.binary and train.class_count < 2:
            raise ValueError("svm learner needs at least two classes")

        initial, shards = partition_devices(
            train, cfg.device_count, self._rng_partition, cfg.initial_per_class
        )
        self.devices = []
        for dev_id, shard in enumerate(shards):
            dev = _Device(dev_id, shard, self._rng_dynamics.permutation(len(shard)))
            dev.insert(dev.draw(cfg.buffer_size), cfg.buffer_size)
            self.devices.append(dev)
        self.fresh_draws = sum(len(d.slots) for d in self.devices)
        self.exhausted = False

        self.server_features = list(initial.features)
        self.server_labels = list(initial.labels)
        self.class_count = train.class_count
        self._fit = None
        self._mfit = None
        self._net = None
        if cfg.learner == "logistic":
            self._net = SoftmaxClassifier(
                train.dimension, self.class_count, cfg.hidden_units, rng=self._rng_model
            )
        self._retrain()
        self.round_index = 0
        self.logs: list[RoundLog] = []
        self._accuracy = self._evaluate()

    # -- model plumbing ----------------------------------------------------

    def _server_xy(self):
        X = np.asarray(self.server_features)
        y = np.asarray(self.server_labels)
        return X, y

    def _retrain(self) -> None:
        X, y = self._server_xy()
        if self.cfg.learner == "logistic":
            self._net = fit_incremental(self._net, X, self._one_based(y), self.cfg.optimizer)
        elif self.binary:
            alpha0 = self._fit.alpha if self._fit is not None else None
            self._fit = fit_binary(X, y, self.cfg.svm, alpha0=alpha0)
        else:
            self._mfit = fit_multiclass(X, y, self.class_count, self.cfg.svm, warm=self._mfit)

    def _one_based(self, labels: np.ndarray) -> np.ndarray:
        return (labels + 3) // 2 if self.binary else labels

    def current_model(self):
        if self.cfg.learner == "logistic":
            return self._net
        return self._fit.model if self.binary else self._mfit.model

    def _evaluate(self) -> float:
        X, y = self.test.features, self.test.labels
        if self.cfg.learner == "logistic":
            return float(np.mean(self._net.predict(X) == self._one_based(y)))
        if self.binary:
            model = self._fit.model
            predicted = np.where(X @ model.weights + model.bias >= 0.0, 1, -1)
            return float(np.mean(predicted == y))
        return float(np.mean(predict_multiclass(self._mfit.model, X) == y))

    # -- per-round device dynamics ------------------------------------------

    def _replace_users(self) -> list[int]:
        count = self.cfg.replaced_users_per_slot
        replaced = self._rng_dynamics.choice(self.cfg.device_count, size=count, replace=False)
        for dev_id in replaced:
            dev = self.devices[dev_id]
            fresh = dev.draw(self.cfg.buffer_size)
            self.fresh_draws += len(fresh)
            if len(fresh) < self.cfg.buffer_size:
                self._warn_exhausted(dev)
            dev.slots, dev.ages = [], []
            dev.insert(fresh, self.cfg.buffer_size)
        return list(replaced)

    def _refresh(self, skip: list[int]) -> None:
        for dev in self.devices:
            if dev.device_id in skip or self.cfg.refresh_per_slot == 0:
                continue
            fresh = dev.draw(self.cfg.refresh_per_slot)
            self.fresh_draws += len(fresh)
            if len(fresh) < self.cfg.refresh_per_slot:
                self._warn_exhausted(dev)
            dev.insert(fresh, self.cfg.buffer_size)

    def _warn_exhausted(self, dev: _Device) -> None:
        self.exhausted = True
        if not dev.warned:
            dev.warned = True
            warnings.warn(
                f"device {dev.device_id} exhausted its local shard; refresh truncated",
                RuntimeWarning,
                stacklevel=4,
            )

    # -- the round itself ----------------------------------------------------

    def _importance(self, eval_model, dev: _Device, snr: float):
        policy = self.cfg.policy
        if policy is Policy.CHANNEL_AWARE:
            return None
        if policy is Policy.LABELED_IMPORTANCE:
            return dii_labeled(eval_model, dev.features(), dev.labels(), snr)
        if self.cfg.learner == "logistic":
            return dii_generic(eval_model, dev.features(), snr)
        if self.binary:
            return dii_unlabeled(eval_model, dev.features(), snr)
        return dii_multiclass(eval_model, dev.features(), snr)

    def run_round(self) -> RoundLog:
        cfg = self.cfg
        self.round_index += 1
        if self.round_index >= 2:
            replaced = self._replace_users()
            self._refresh(replaced)

        channels = [
            sample_fading(self._rng_channel, cfg.transmit_power, cfg.noise_variance)
            for _ in range(cfg.device_count)
        ]
        eval_model = compress_model(self.current_model(), CompressionSpec(cfg.compression_ratio))

        reports = []
        for dev, ch in zip(self.devices, channels):
            if not dev.slots:
                continue
            snr = receive_snr(ch)
            reports.append(
                DeviceReport(dev.device_id, snr, self._importance(eval_model, dev, snr), len(dev.slots))
            )
        device_id, slot = schedule(reports, cfg.policy, self._rng_sched)

        dev = self.devices[device_id]
        shard_index = dev.slots[slot]
        decoded = transmit_and_decode(dev.shard.features[shard_index], channels[device_id], self._rng_noise)
        self.server_features.append(decoded)
        self.server_labels.append(int(dev.shard.labels[shard_index]))
        del dev.slots[slot]
        del dev.ages[slot]

        if self.round_index % cfg.retrain_stride == 0 or self.round_index == cfg.budget:
            self._retrain()
        if self.round_index % cfg.eval_stride == 0 or self.round_index == cfg.budget:
            self._accuracy = self._evaluate()

        log = RoundLog(
            round_index=self.round_index,
            device_id=device_id,
            buffer_slot=slot,
            receive_snr=receive_snr(channels[device_id]),
            dii_values={r.device_id: (r.dii.value if r.dii else None) for r in reports},
            accuracy=self._accuracy,
        )
        self.logs.append(log)
        return log

    def run(self) -> TrialResult:
        for _ in range(self.cfg.budget):
            self.run_round()
        return TrialResult(
            accuracies=np.array([log.accuracy for log in self.logs]),
            logs=self.logs,
            fresh_draws=self.fresh_draws,
            exhausted=self.exhausted,
        )


def data_diversity_count(cfg: SimConfig, rounds: int | None = None) -> int:
    """Distinct samples that entered any buffer by the end of round ``rounds``.

    Initial fills give device_count * buffer_size; every later round adds
    refresh_per_slot per surviving device plus a whole buffer per replaced
    device.  Matches the simulator's fresh-draw audit while no shard runs dry.
    """
    rounds = cfg.budget if rounds is None else rounds
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    per_round = (
        (cfg.device_count - cfg.replaced_users_per_slot) * cfg.refresh_per_slot
        + cfg.replaced_users_per_slot * cfg.buffer_size
    )
    return cfg.device_count * cfg.buffer_size + (rounds - 1) * per_round


@dataclass
class CurveStats:
    """Accuracy-versus-round aggregate over trials of one policy."""

    mean: np.ndarray
    std: np.ndarray
    trials: int
    per_trial: np.ndarray


def _trial_worker(args) -> tuple[str, int, np.ndarray, int]:
    cfg, train, test, seed_seq, index = args
    result = Simulation(cfg, train, test, seed_seq).run()
    return cfg.policy.value, index, result.accuracies, result.fresh_draws


def run_experiment(
    cfg: SimConfig,
    train: Dataset,
    test: Dataset,
    trials: int,
    policies: list[Policy] | None = None,
    max_workers: int = 1,
) -> dict[Policy, CurveStats]:
    """Average accuracy curves per policy over ``trials`` independent runs.

    All policies share per-trial seed material, so they see the same shards,
    fading and noise draws; differences are the scheduling decisions alone.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    policies = [cfg.policy] if policies is None else list(policies)
    children = np.random.SeedSequence(cfg.seed).spawn(trials)
    jobs = [
        (replace(cfg, policy=policy), train, test, child, i)
        for policy in policies
        for i, child in enumerate(children)
    ]
    results: dict[str, dict[int, np.ndarray]] = {p.value: {} for p in policies}
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(_trial_worker, jobs))
    else:
        outcomes = [_trial_worker(job) for job in jobs]
    for policy_value, index, accuracies, _ in outcomes:
        results[policy_value][index] = accuracies
    curves = {}
    for policy in policies:
        stack = np.vstack([results[policy.value][i] for i in range(trials)])
        curves[policy] = CurveStats(
            mean=stack.mean(axis=0),
            std=stack.std(axis=0, ddof=1) if trials > 1 else np.zeros(stack.shape[1]),
            trials=trials,
            per_trial=stack,
        )
    return curves
