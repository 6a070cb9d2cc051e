"""ROC/AUC, per-slot continuous trust evaluation and detection reporting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .acfg import build_acfg
from .embed import ModelParams, forward
from .errors import DegenerateEmbedding
from .siamese import cosine_similarity
from .telemetry import SlotRecord


@dataclass(frozen=True)
class TrustVerdict:
    slot_index: int
    similarity: float
    threshold: float
    trusted: bool
    degenerate: bool = False


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]

    @property
    def fpr(self) -> np.ndarray:
        return np.array([pt.fpr for pt in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([pt.tpr for pt in self.points])


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Sweep thresholds over the distinct scores, highest first; ties move together.

    Label +1 is the positive class; a point at threshold ``t`` counts scores >= t
    as predicted positive.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D sequences of equal length")
    if not np.all(np.isin(y, (1, -1))):
        raise ValueError("labels must be +1 or -1")
    n_pos = int((y == 1).sum())
    n_neg = int((y == -1).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative example")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    points = [RocPoint(math.inf, 0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        tp += int((y[i:j] == 1).sum())
        fp += int((y[i:j] == -1).sum())
        points.append(RocPoint(float(s[i]), fp / n_neg, tp / n_pos))
        i = j
    return RocCurve(tuple(points))


def auc(curve: RocCurve) -> float:
    x, y = curve.fpr, curve.tpr
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def write_roc_csv(curve: RocCurve, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr"])
    for pt in curve.points:
        w.writerow([repr(pt.threshold), repr(pt.fpr), repr(pt.tpr)])


# -- continuous evaluation ----------------------------------------------------------

def _check_ready(params: ModelParams, delta: float) -> None:
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if params.norm_stats is None:
        raise ValueError("model has no normalization stats; train it or load a trained model file")


def reference_embedding(params: ModelParams, reference: SlotRecord) -> np.ndarray:
    return forward(params, build_acfg(reference, params.norm_stats)).vector


def score_slot(params: ModelParams, ref_vector: np.ndarray, record: SlotRecord, delta: float) -> TrustVerdict:
    """One step of the evaluation loop: embed the slot graph and compare against the reference."""
    vec = forward(params, build_acfg(record, params.norm_stats)).vector
    try:
        sim = cosine_similarity(ref_vector, vec)
    except DegenerateEmbedding:
        return TrustVerdict(record.slot_index, 0.0, delta, False, True)
    return TrustVerdict(record.slot_index, sim, delta, sim >= delta)


def evaluate_stream(
    params: ModelParams, reference: SlotRecord, stream: Sequence[SlotRecord], delta: float = 0.85
) -> list[TrustVerdict]:
    _check_ready(params, delta)
    ref_vec = reference_embedding(params, reference)
    return [score_slot(params, ref_vec, rec, delta) for rec in stream]


@dataclass(frozen=True)
class DetectionReport:
    true_detections: int
    missed: int
    false_alarms: int


def detection_report(verdicts: Sequence[TrustVerdict], anomaly_ground_truth: Iterable[int]) -> DetectionReport:
    truth = set(anomaly_ground_truth)
    seen = {v.slot_index for v in verdicts}
    unknown = truth - seen
    if unknown:
        raise ValueError(f"ground-truth slots {sorted(unknown)} not present in the verdicts")
    hit = sum(1 for v in verdicts if not v.trusted and v.slot_index in truth)
    missed = sum(1 for v in verdicts if v.trusted and v.slot_index in truth)
    false_alarms = sum(1 for v in verdicts if not v.trusted and v.slot_index not in truth)
    return DetectionReport(hit, missed, false_alarms)


def write_verdicts_csv(verdicts: Iterable[TrustVerdict], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slot", "similarity", "trusted"])
    for v in verdicts:
        w.writerow([v.slot_index, repr(v.similarity), int(v.trusted)])


def write_verdicts_jsonl(verdicts: Iterable[TrustVerdict], fh: IO[str]) -> None:
    for v in verdicts:
        fh.write(json.dumps(asdict(v), separators=(",", ":")) + "\n")
