"""Training-set construction: K-means selection, positive/negative pairing, persistence."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .acfg import NormStats, build_acfg, compute_norm_stats, normalize_feature
from .errors import CorruptFileError, UnsupportedVersionError
from .siamese import PairExample
from .telemetry import AnomalyKind, SlotRecord, TrustedProfile, inject_anomaly, simulate_trusted_slot

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    q_select: int = 4000
    s_anomalies: int = 1000
    n_raw: int | None = None  # default: 1.25 * q_select
    k: int = 8
    kmeans_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if min(self.q_select, self.s_anomalies, self.kmeans_iters) < 0:
            raise ValueError("dataset counts must be non-negative")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.q_select > self.raw_count:
            raise ValueError(f"q_select={self.q_select} exceeds n_raw={self.raw_count}")

    @property
    def raw_count(self) -> int:
        return self.n_raw if self.n_raw is not None else (self.q_select * 5 + 3) // 4


# -- K-means ------------------------------------------------------------------

def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _transfer_pass(X: np.ndarray, assign: np.ndarray, k: int) -> np.ndarray | None:
    """One sweep of single-point transfers (Hartigan). Returns the improved
    assignment, or None when no move lowers the within-cluster error."""
    assign = assign.copy()
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    C = np.array([X[assign == c].mean(axis=0) if counts[c] else np.zeros(X.shape[1]) for c in range(k)])
    moved = False
    for i, x in enumerate(X):
        a = assign[i]
        if counts[a] < 2:
            continue
        d = ((C - x) ** 2).sum(axis=1)
        remove = counts[a] / (counts[a] - 1) * d[a]
        add = counts / (counts + 1) * d
        add[a] = np.inf
        b = int(add.argmin())
        if add[b] < remove - 1e-12 * (1.0 + remove):
            C[a] = (counts[a] * C[a] - x) / (counts[a] - 1)
            C[b] = (counts[b] * C[b] + x) / (counts[b] + 1)
            counts[a] -= 1
            counts[b] += 1
            assign[i] = b
            moved = True
    return assign if moved else None


def kmeans(points, k: int, max_iters: int = 100, seed: int = 0):
    """Lloyd's algorithm with seeded random-point initialization.

    Returns ``(assignments, centroids, sse_history)`` where ``sse_history[t]`` is
    the within-cluster squared error right after the t-th assignment step.
    An emptied cluster is re-seeded at the point farthest from its centroid.
    At a Lloyd fixpoint one sweep of single-point transfers is tried; if it
    lowers the error, Lloyd iterations resume from the improved partition.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must all be vectors of the same dimension")
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    C = X[rng.choice(n, size=k, replace=False)].copy()
    assign = None
    history = []
    for _ in range(max(1, max_iters)):
        d = _sq_dists(X, C)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            new = _transfer_pass(X, new, k)
            if new is None:
                break
        assign = new
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                C[c] = X[assign == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            own = ((X - C[assign]) ** 2).sum(axis=1)
            own[counts[assign] < 2] = -1.0  # never strip a singleton cluster
            far = int(own.argmax())
            C[c] = X[far]
            counts[assign[far]] -= 1
            counts[c] += 1
            assign = assign.copy()
            assign[far] = c
    return assign, C, history


# -- selection and pairing ------------------------------------------------------

def _normalized_matrix(records: Sequence[SlotRecord], stats: NormStats) -> np.ndarray:
    return np.array([
        [normalize_feature(x, lo, hi) for x, lo, hi in zip(r.features(), stats.mins, stats.maxs)]
        for r in records
    ])


def select_similar(records: Sequence[SlotRecord], cfg: DatasetConfig) -> list[SlotRecord]:
    """Keep the ``q_select`` records closest to their own centroid, largest clusters first."""
    if cfg.q_select > len(records):
        raise ValueError(f"q_select={cfg.q_select} exceeds the {len(records)} available records")
    if cfg.q_select == 0:
        return []
    if cfg.q_select == len(records):
        return list(records)
    X = _normalized_matrix(records, compute_norm_stats(records))
    assign, C, _ = kmeans(X, min(cfg.k, len(records)), cfg.kmeans_iters, cfg.seed)
    dist = ((X - C[assign]) ** 2).sum(axis=1)
    sizes = np.bincount(assign, minlength=len(C))
    cluster_order = sorted(range(len(C)), key=lambda c: (-sizes[c], c))
    picked: list[int] = []
    for c in cluster_order:
        members = np.flatnonzero(assign == c)
        members = members[np.lexsort((members, dist[members]))]
        picked.extend(int(i) for i in members[: cfg.q_select - len(picked)])
        if len(picked) == cfg.q_select:
            break
    return [records[i] for i in picked]


def _pair(ref: SlotRecord, slot: SlotRecord, label: int, stats: NormStats) -> PairExample:
    return PairExample(build_acfg(ref, stats), build_acfg(slot, stats), label, (ref, slot))


def build_positive_pairs(selected: Sequence[SlotRecord], count: int, stats: NormStats, seed: int) -> list[PairExample]:
    if count == 0:
        return []
    n = len(selected)
    if n < 2:
        raise ValueError("need at least two records to form positive pairs")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        j += j >= i
        out.append(_pair(selected[i], selected[j], 1, stats))
    return out


def build_negative_pairs(
    anomalous: Sequence[SlotRecord], trusted_pool: Sequence[SlotRecord], stats: NormStats, seed: int
) -> list[PairExample]:
    if not anomalous or not trusted_pool:
        raise ValueError("negative pairing needs non-empty anomalous and trusted lists")
    rng = np.random.default_rng(seed)
    return [_pair(trusted_pool[int(rng.integers(len(trusted_pool)))], a, -1, stats) for a in anomalous]


@dataclass
class Dataset:
    pairs: list[PairExample]
    stats: NormStats

    def examples(self, stats: NormStats | None = None) -> list[PairExample]:
        """Pairs with graphs rebuilt under ``stats`` (e.g. a trained model's)."""
        if stats is None or stats == self.stats:
            return list(self.pairs)
        return [_pair(*p.records, p.label, stats) for p in self.pairs]

    @property
    def labels(self) -> list[int]:
        return [p.label for p in self.pairs]


def synthesize(cfg: DatasetConfig, profile: TrustedProfile | None = None) -> Dataset:
    """Simulate trusted and anomalous telemetry and pair it into a labeled dataset."""
    profile = replace(profile or TrustedProfile(), seed=cfg.seed)
    n_raw = cfg.raw_count
    raw = [simulate_trusted_slot(profile, i) for i in range(n_raw)]
    selected = select_similar(raw, cfg)

    kinds = list(AnomalyKind)
    rng = np.random.default_rng([cfg.seed, 1])
    anomalous = []
    for i in range(cfg.s_anomalies):
        base = simulate_trusted_slot(profile, n_raw + i)
        anomalous.append(inject_anomaly(base, kinds[int(rng.integers(len(kinds)))], rng, profile.anomaly))

    if not selected and not anomalous:
        raise ValueError("refusing to build an empty dataset")
    stats = compute_norm_stats(selected + anomalous)
    pairs = build_positive_pairs(selected, len(selected), stats, cfg.seed + 1)
    if anomalous:
        pairs += build_negative_pairs(anomalous, selected, stats, cfg.seed + 2)
    return Dataset(pairs, stats)


# -- persistence ------------------------------------------------------------------

def dumps_dataset(pairs: Sequence[PairExample], stats: NormStats) -> str:
    lines = [json.dumps({"format_version": FORMAT_VERSION, "norm_stats": stats.to_json()}, separators=(",", ":"))]
    for p in pairs:
        if p.records is None:
            raise ValueError("pairs must carry their raw records to be saved")
        ref, slot = p.records
        lines.append(json.dumps({"label": p.label, "ref": ref.to_wire(), "slot": slot.to_wire()}, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        raise CorruptFileError("dataset file is truncated (missing final newline)")
    try:
        header = json.loads(lines[0])
    except (json.JSONDecodeError, IndexError) as exc:
        raise CorruptFileError(f"dataset header unreadable: {exc}") from None
    if not isinstance(header, dict) or "format_version" not in header:
        raise CorruptFileError("dataset header lacks format_version")
    if header["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset format_version {header['format_version']!r}")
    try:
        stats = NormStats.from_json(header["norm_stats"])
    except (KeyError, ValueError) as exc:
        raise CorruptFileError(f"dataset norm_stats invalid: {exc}") from None
    pairs = []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            obj = json.loads(line)
            ref, slot = SlotRecord.from_wire(obj["ref"]), SlotRecord.from_wire(obj["slot"])
            pairs.append(_pair(ref, slot, int(obj["label"]), stats))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(f"dataset line {lineno}: {exc}") from None
    return Dataset(pairs, stats)


def save_dataset(pairs: Sequence[PairExample], stats: NormStats, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(pairs, stats))


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return loads_dataset(fh.read())
