"""Synthetic per-slot collaborator telemetry with anomaly injection.

Stands in for packet captures and CPU sampling on a physical testbed. Every
draw is keyed on ``(profile.seed, slot_index)`` so streams are reproducible
regardless of generation order.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from typing import IO, Iterable, Mapping

import numpy as np

# JSON key -> SlotRecord attribute
WIRE_KEYS = {
    "slot": "slot_index",
    "delay_ms": "delay_ms",
    "subtasks": "subtasks_received",
    "cpu": "cpu_utilization",
    "cmpl_ms": "avg_completion_ms",
    "efc": "effectiveness",
}

CONTINUOUS_FEATURES = ("delay_ms", "subtasks_received", "cpu_utilization", "avg_completion_ms")


class AnomalyKind(enum.Enum):
    CpuSaturation = "cpu_saturation"
    PacketDrop = "packet_drop"
    ResultCorruption = "result_corruption"


@dataclass(frozen=True)
class SlotRecord:
    slot_index: int
    delay_ms: float
    subtasks_received: int
    cpu_utilization: float
    avg_completion_ms: float
    effectiveness: int

    def __post_init__(self):
        if self.slot_index < 0:
            raise ValueError(f"slot_index must be >= 0, got {self.slot_index}")
        if not (math.isfinite(self.delay_ms) and self.delay_ms >= 0):
            raise ValueError(f"delay_ms must be finite and >= 0, got {self.delay_ms}")
        if self.subtasks_received < 0:
            raise ValueError(f"subtasks_received must be >= 0, got {self.subtasks_received}")
        if not (0.0 <= self.cpu_utilization <= 1.0):
            raise ValueError(f"cpu_utilization must be in [0, 1], got {self.cpu_utilization}")
        if not (math.isfinite(self.avg_completion_ms) and self.avg_completion_ms >= 0):
            raise ValueError(f"avg_completion_ms must be finite and >= 0, got {self.avg_completion_ms}")
        if self.effectiveness not in (0, 1):
            raise ValueError(f"effectiveness must be 0 or 1, got {self.effectiveness}")

    def features(self) -> tuple[float, float, float, float]:
        return (
            float(self.delay_ms),
            float(self.subtasks_received),
            float(self.cpu_utilization),
            float(self.avg_completion_ms),
        )

    def to_wire(self) -> dict:
        return {key: getattr(self, attr) for key, attr in WIRE_KEYS.items()}

    @classmethod
    def from_wire(cls, obj: Mapping) -> "SlotRecord":
        try:
            return cls(
                slot_index=int(obj["slot"]),
                delay_ms=float(obj["delay_ms"]),
                subtasks_received=int(obj["subtasks"]),
                cpu_utilization=float(obj["cpu"]),
                avg_completion_ms=float(obj["cmpl_ms"]),
                effectiveness=int(obj["efc"]),
            )
        except KeyError as exc:
            raise ValueError(f"slot record missing key {exc}") from None
        except TypeError as exc:
            raise ValueError(f"malformed slot record: {exc}") from None


@dataclass(frozen=True)
class AnomalyFactors:
    """Inflation/deflation ranges applied by :func:`inject_anomaly`."""

    cpu_range: tuple[float, float] = (0.85, 1.0)
    completion_inflation: tuple[float, float] = (1.5, 3.0)
    subtask_keep: tuple[float, float] = (0.2, 0.6)
    delay_inflation: tuple[float, float] = (2.0, 5.0)


@dataclass(frozen=True)
class TrustedProfile:
    delay_mean: float = 20.0
    delay_std: float = 5.0
    subtasks_mean: float = 12.0
    subtasks_std: float = 2.0
    cpu_mean: float = 0.30
    cpu_std: float = 0.05
    completion_mean: float = 40.0
    completion_std: float = 8.0
    seed: int = 0
    anomaly: AnomalyFactors = AnomalyFactors()

    def __post_init__(self):
        for name in ("delay_std", "subtasks_std", "cpu_std", "completion_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


def simulate_trusted_slot(profile: TrustedProfile, slot_index: int, rng: np.random.Generator | None = None) -> SlotRecord:
    """Draw one trusted-state slot from clamped normals around the profile means.

    Without an explicit ``rng`` the draw is keyed on ``(profile.seed, slot_index)``.
    """
    if rng is None:
        rng = _rng(profile.seed, slot_index, 0)
    z = rng.standard_normal(4)
    delay = max(0.0, profile.delay_mean + profile.delay_std * z[0])
    subtasks = max(0, int(round(profile.subtasks_mean + profile.subtasks_std * z[1])))
    cpu = min(1.0, max(0.0, profile.cpu_mean + profile.cpu_std * z[2]))
    cmpl = max(0.0, profile.completion_mean + profile.completion_std * z[3])
    return SlotRecord(slot_index, float(delay), subtasks, float(cpu), float(cmpl), 1)


def inject_anomaly(
    record: SlotRecord,
    kind: AnomalyKind,
    rng: np.random.Generator,
    factors: AnomalyFactors = AnomalyFactors(),
) -> SlotRecord:
    if kind is AnomalyKind.CpuSaturation:
        cpu = rng.uniform(*factors.cpu_range)
        scale = rng.uniform(*factors.completion_inflation)
        return replace(record, cpu_utilization=float(cpu), avg_completion_ms=record.avg_completion_ms * float(scale))
    if kind is AnomalyKind.PacketDrop:
        keep = rng.uniform(*factors.subtask_keep)
        scale = rng.uniform(*factors.delay_inflation)
        return replace(
            record,
            subtasks_received=int(math.floor(record.subtasks_received * keep)),
            delay_ms=record.delay_ms * float(scale),
        )
    if kind is AnomalyKind.ResultCorruption:
        return replace(record, effectiveness=0)
    raise ValueError(f"unknown anomaly kind {kind!r}")


def simulate_stream(
    profile: TrustedProfile,
    n_slots: int,
    anomaly_slots: Mapping[int, AnomalyKind] | None = None,
) -> list[SlotRecord]:
    anomaly_slots = dict(anomaly_slots or {})
    if n_slots < 0:
        raise ValueError(f"n_slots must be >= 0, got {n_slots}")
    bad = sorted(i for i in anomaly_slots if not 0 <= i < n_slots)
    if bad:
        raise ValueError(f"anomaly slot indices {bad} outside stream of {n_slots} slots")
    out = []
    for n in range(n_slots):
        rec = simulate_trusted_slot(profile, n)
        if n in anomaly_slots:
            rec = inject_anomaly(rec, anomaly_slots[n], _rng(profile.seed, n, 1), profile.anomaly)
        out.append(rec)
    return out


def random_anomaly_plan(n_slots: int, n_anomalies: int, seed: int) -> dict[int, AnomalyKind]:
    """Pick ``n_anomalies`` distinct slots and cycle through the anomaly kinds."""
    if not 0 <= n_anomalies <= n_slots:
        raise ValueError(f"cannot place {n_anomalies} anomalies in {n_slots} slots")
    rng = np.random.default_rng(seed)
    slots = sorted(int(i) for i in rng.choice(n_slots, size=n_anomalies, replace=False))
    kinds = list(AnomalyKind)
    return {s: kinds[rng.integers(len(kinds))] for s in slots}


def dumps_record(record: SlotRecord) -> str:
    return json.dumps(record.to_wire(), separators=(",", ":"))


def write_records(records: Iterable[SlotRecord], fh: IO[str]) -> None:
    for rec in records:
        fh.write(dumps_record(rec) + "\n")


def read_records(fh: IO[str]) -> list[SlotRecord]:
    out = []
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc})") from None
        out.append(SlotRecord.from_wire(obj))
    return out
