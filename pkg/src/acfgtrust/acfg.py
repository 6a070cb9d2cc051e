"""Three-vertex attributed graph over communication, computing and effectiveness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .telemetry import CONTINUOUS_FEATURES, SlotRecord

N_VERTICES = 3
FEATURE_DIM = 2
# communication -> computing, computing -> effectiveness, communication -> effectiveness
EDGES = frozenset({(0, 1), (1, 2), (0, 2)})


def in_neighbors(edges=EDGES) -> tuple[tuple[int, ...], ...]:
    """Message-passing neighbourhood of each vertex: its in-neighbours."""
    return tuple(tuple(sorted(j for j, k in edges if k == v)) for v in range(N_VERTICES))


def adjacency(edges=EDGES) -> np.ndarray:
    """``A[k, j] = 1`` when vertex ``k`` aggregates from vertex ``j``."""
    a = np.zeros((N_VERTICES, N_VERTICES))
    for k, nbrs in enumerate(in_neighbors(edges)):
        a[k, list(nbrs)] = 1.0
    return a


@dataclass(frozen=True)
class NormStats:
    mins: tuple[float, float, float, float]
    maxs: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.mins) != 4 or len(self.maxs) != 4:
            raise ValueError("NormStats needs exactly four min and four max values")
        object.__setattr__(self, "mins", tuple(float(x) for x in self.mins))
        object.__setattr__(self, "maxs", tuple(float(x) for x in self.maxs))
        for name, lo, hi in zip(CONTINUOUS_FEATURES, self.mins, self.maxs):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"non-finite bound for {name}")
            if lo > hi:
                raise ValueError(f"min > max for {name}: {lo} > {hi}")

    def to_json(self) -> dict:
        return {
            name: {"min": lo, "max": hi}
            for name, lo, hi in zip(CONTINUOUS_FEATURES, self.mins, self.maxs)
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        try:
            mins = tuple(float(obj[name]["min"]) for name in CONTINUOUS_FEATURES)
            maxs = tuple(float(obj[name]["max"]) for name in CONTINUOUS_FEATURES)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed norm_stats: {exc!r}") from None
        return cls(mins, maxs)


def compute_norm_stats(records: Sequence[SlotRecord]) -> NormStats:
    if not records:
        raise ValueError("cannot compute normalization stats from an empty record list")
    feats = np.array([r.features() for r in records], dtype=np.float64)
    return NormStats(tuple(float(x) for x in feats.min(axis=0)), tuple(float(x) for x in feats.max(axis=0)))


def normalize_feature(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"min {lo} > max {hi}")
    if lo == hi:
        return 0.5
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


@dataclass(frozen=True)
class Acfg:
    """Vertex features ``R`` of shape (3, 2); the edge set is fixed to :data:`EDGES`."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.shape != (N_VERTICES, FEATURE_DIM):
            raise ValueError(f"ACFG features must have shape (3, 2), got {f.shape}")
        if not np.all(np.isfinite(f)) or f.min() < 0.0 or f.max() > 1.0:
            raise ValueError("ACFG features must be finite and within [0, 1]")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "features", f)

    @property
    def edges(self) -> frozenset:
        return EDGES

    def __eq__(self, other):
        return isinstance(other, Acfg) and np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash(self.features.tobytes())


def build_acfg(record: SlotRecord, stats: NormStats) -> Acfg:
    delay, subtasks, cpu, cmpl = (
        normalize_feature(x, lo, hi) for x, lo, hi in zip(record.features(), stats.mins, stats.maxs)
    )
    return Acfg(np.array([[delay, subtasks], [cpu, cmpl], [float(record.effectiveness), 0.0]]))
