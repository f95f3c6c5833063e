"""Per-round device selection rules over (SNR, importance) reports."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .importance import DiiValue


class Policy(Enum):
    IMPORTANCE_AWARE = "importance-aware"
    CHANNEL_AWARE = "channel-aware"
    DATA_AWARE = "data-aware"
    GENERIC_IMPORTANCE = "generic-importance"
    LABELED_IMPORTANCE = "labeled-importance"


@dataclass(frozen=True)
class DeviceReport:
    """What one device feeds back before a scheduling decision."""

    device_id: int
    snr: float
    dii: DiiValue | None
    buffer_size: int

    def __post_init__(self) -> None:
        if not self.snr > 0.0:
            raise ValueError(f"receive SNR must be positive, got {self.snr}")
        if self.buffer_size < 1:
            raise ValueError("a report requires a nonempty buffer")


def _metric(report: DeviceReport, policy: Policy) -> float:
    if policy is Policy.CHANNEL_AWARE:
        return report.snr
    if report.dii is None:
        raise ValueError(f"device {report.device_id} reported no importance value")
    if policy is Policy.DATA_AWARE:
        if not report.dii.kind.additive:
            raise ValueError("data-aware scheduling needs an additive importance kind")
        return report.dii.value + 1.0 / report.snr
    return report.dii.value


def schedule(
    reports: list[DeviceReport],
    policy: Policy,
    rng: np.random.Generator | None = None,
) -> tuple[int, int]:
    """Pick ``(device_id, buffer_slot)`` for the round's single uplink grant.

    Importance policies take the device with the largest reported value and
    its own best slot; channel-aware takes the largest SNR and a uniformly
    random slot (``rng`` required); data-aware strips the channel term from
    additive reports and compares the pure data uncertainty.  Ties go to the
    smallest device id.
    """
    if not reports:
        raise ValueError("cannot schedule over zero reports")
    ids = [r.device_id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate device ids in reports")
    winner = max(reports, key=lambda r: (_metric(r, policy), -r.device_id))
    if policy is Policy.CHANNEL_AWARE:
        if rng is None:
            raise ValueError("channel-aware scheduling draws a random slot and needs rng")
        slot = int(rng.integers(winner.buffer_size))
    else:
        slot = winner.dii.best_sample_index
        if not 0 <= slot < winner.buffer_size:
            raise ValueError(f"best sample slot {slot} outside buffer of {winner.buffer_size}")
    return winner.device_id, slot


@dataclass(frozen=True)
class SchedulingInstance:
    """One synthetic round: per-device channel power gains and best data uncertainties."""

    channel_gains: np.ndarray
    uncertainties: np.ndarray


def random_instances(
    count: int,
    device_count: int,
    rng: np.random.Generator,
    gain_range: tuple[float, float] = (0.2, 3.0),
    uncertainty_range: tuple[float, float] = (-1.0, -0.01),
    min_gap: float = 1e-3,
) -> list[SchedulingInstance]:
    """Instances with gains bounded away from zero and strictly separated values.

    The separation makes every argmax unique, so limit comparisons are not
    decided by tie-breaking.
    """

    def draw(lo: float, hi: float) -> np.ndarray:
        while True:
            values = rng.uniform(lo, hi, size=device_count)
            if device_count == 1 or np.min(np.diff(np.sort(values))) >= min_gap:
                return values

    return [
        SchedulingInstance(draw(*gain_range), draw(*uncertainty_range))
        for _ in range(count)
    ]


@dataclass(frozen=True)
class LimitAgreement:
    """Fractions of instances where the combined rule matches each single-criterion rule."""

    channel_aware: float
    data_aware: float


def verify_snr_limits(instances: list[SchedulingInstance], transmit_snr: float) -> LimitAgreement:
    """Compare combined-importance picks against pure-SNR and pure-uncertainty picks.

    At very low transmit SNR the channel term -1/SNR dominates and the
    combined rule collapses onto channel-aware; at very high transmit SNR it
    vanishes and the rule collapses onto data-aware.
    """
    if not transmit_snr > 0.0:
        raise ValueError(f"transmit SNR must be positive, got {transmit_snr}")
    channel_hits = 0
    data_hits = 0
    for inst in instances:
        snr = 2.0 * transmit_snr * inst.channel_gains
        combined = -1.0 / snr + inst.uncertainties
        pick = int(np.argmax(combined))
        channel_hits += pick == int(np.argmax(inst.channel_gains))
        data_hits += pick == int(np.argmax(inst.uncertainties))
    total = len(instances)
    if total == 0:
        raise ValueError("need at least one instance")
    return LimitAgreement(channel_hits / total, data_hits / total)
