"""Shared-weight pair similarity, squared-error objective and SGD training."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .acfg import Acfg
from .telemetry import SlotRecord
from .embed import Gradients, ModelParams, backward_batch, forward_batch
from .errors import DegenerateEmbedding

log = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class PairExample:
    g_ref: Acfg
    g_slot: Acfg
    label: int
    # raw (reference, slot) telemetry the graphs were built from, when known
    records: tuple[SlotRecord, SlotRecord] | None = None

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1
    epochs: int = 20
    shuffle_seed: int = 0
    degenerate_epsilon: float = DEGENERATE_EPS

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.degenerate_epsilon > 0):
            raise ValueError("learning_rate and degenerate_epsilon must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if not 0 <= self.shuffle_seed < 2**64:
            raise ValueError("shuffle_seed must be an unsigned 64-bit integer")


def cosine_similarity(u, v, eps: float = DEGENERATE_EPS) -> float:
    """Cosine of the angle between ``u`` and ``v``.

    Raises :class:`DegenerateEmbedding` when either norm is below ``eps``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"vectors must be 1-D and equal length, got {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < eps or nv < eps:
        raise DegenerateEmbedding(f"embedding norm below {eps:g} (|u|={nu:.3g}, |v|={nv:.3g})")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _pair_arrays(pairs: Sequence[PairExample]):
    ref = np.stack([p.g_ref.features for p in pairs])
    slot = np.stack([p.g_slot.features for p in pairs])
    y = np.array([p.label for p in pairs], dtype=np.float64)
    return ref, slot, y


def _batch_cosine(Ua, Ub, eps):
    na = np.linalg.norm(Ua, axis=1)
    nb = np.linalg.norm(Ub, axis=1)
    bad = np.flatnonzero((na < eps) | (nb < eps))
    if bad.size:
        raise DegenerateEmbedding(f"{bad.size} pair(s) have an embedding norm below {eps:g} (first index {bad[0]})")
    c = np.einsum("bp,bp->b", Ua, Ub) / (na * nb)
    return c, na, nb


def _loss_and_grads(params: ModelParams, ref, slot, y, eps=DEGENERATE_EPS, need_grad=True):
    """Mean squared error over the batch and, optionally, its gradient."""
    B = len(y)
    U, cache = forward_batch(params, np.concatenate([ref, slot]))
    Ua, Ub = U[:B], U[B:]
    c, na, nb = _batch_cosine(Ua, Ub, eps)
    losses = (c - y) ** 2
    if not need_grad:
        return losses, None
    dc = 2.0 * (c - y) / B
    inv = 1.0 / (na * nb)
    gA = dc[:, None] * (Ub * inv[:, None] - (c / na**2)[:, None] * Ua)
    gB = dc[:, None] * (Ua * inv[:, None] - (c / nb**2)[:, None] * Ub)
    grads = Gradients.zeros_like(params)
    backward_batch(params, cache, np.concatenate([gA, gB]), grads)
    return losses, grads


def pair_loss(params: ModelParams, pair: PairExample, eps: float = DEGENERATE_EPS) -> float:
    ref, slot, y = _pair_arrays([pair])
    losses, _ = _loss_and_grads(params, ref, slot, y, eps, need_grad=False)
    return float(losses[0])


def gradients(params: ModelParams, batch: Sequence[PairExample], eps: float = DEGENERATE_EPS) -> Gradients:
    """Exact gradient of the mean batch loss w.r.t. ``W1, P1..PH, W2``."""
    if not batch:
        raise ValueError("gradients() needs a non-empty batch")
    _, grads = _loss_and_grads(params, *_pair_arrays(batch), eps)
    return grads


def mean_loss(params: ModelParams, pairs: Sequence[PairExample], chunk: int = 2048) -> float:
    ref, slot, y = _pair_arrays(pairs)
    total = 0.0
    for i in range(0, len(y), chunk):
        losses, _ = _loss_and_grads(params, ref[i:i + chunk], slot[i:i + chunk], y[i:i + chunk], need_grad=False)
        total += losses.sum()
    return total / len(y)


def similarities(params: ModelParams, pairs: Sequence[PairExample], chunk: int = 2048) -> np.ndarray:
    """Cosine similarity of every pair, batched."""
    ref, slot, _ = _pair_arrays(pairs)
    out = []
    for i in range(0, len(ref), chunk):
        U, _ = forward_batch(params, np.concatenate([ref[i:i + chunk], slot[i:i + chunk]]))
        B = len(ref[i:i + chunk])
        out.append(_batch_cosine(U[:B], U[B:], DEGENERATE_EPS)[0])
    return np.concatenate(out)


class TrainingDiverged(RuntimeError):
    pass


def train(params: ModelParams, data: Sequence[PairExample], cfg: TrainConfig = TrainConfig()):
    """Mini-batch SGD on the squared similarity error.

    Returns ``(trained_params, loss_history)``; ``loss_history[e]`` is the mean
    per-pair loss seen during epoch ``e`` (evaluated before each update).
    """
    if not data:
        raise ValueError("cannot train on an empty dataset")
    ref, slot, y = _pair_arrays(data)
    rng = np.random.default_rng(cfg.shuffle_seed)
    arrays = [a.copy() for a in params.arrays()]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            current = params.with_arrays(arrays)
            losses, grads = _loss_and_grads(current, ref[idx], slot[idx], y[idx], cfg.degenerate_epsilon)
            batch_total = float(losses.sum())
            if not math.isfinite(batch_total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, batch starting {start}")
            total += batch_total
            for a, g in zip(arrays, grads.arrays()):
                a -= cfg.learning_rate * g
        history.append(total / len(y))
        log.info("epoch %d mean loss %.6f", epoch + 1, history[-1])
    return params.with_arrays(arrays), history


def write_loss_csv(history: Sequence[float], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epoch", "mean_loss"])
    for i, v in enumerate(history, 1):
        w.writerow([i, repr(float(v))])


# -- finite-difference verification ---------------------------------------------

def grad_check(params: ModelParams, pair: PairExample, step: float = 1e-5, floor: float = 1e-6) -> float:
    """Max over all parameter entries of ``|a - n| / max(|a|, |n|, floor)``.

    ``a`` is the analytic gradient and ``n`` the central difference. The floor
    keeps entries that are zero up to rounding from dominating the ratio.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    analytic = gradients(params, [pair]).arrays()
    base = [a.copy() for a in params.arrays()]
    worst = 0.0
    for which, arr in enumerate(base):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = pair_loss(params.with_arrays(base), pair)
            arr[idx] = orig - step
            down = pair_loss(params.with_arrays(base), pair)
            arr[idx] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[which][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def relu_margin(params: ModelParams, pair: PairExample) -> float:
    """Smallest |relu input| that a parameter perturbation could push across zero.

    Pre-activations computed from an all-zero aggregate stay exactly zero under
    any perturbation and are skipped.
    """
    margin = math.inf
    for g in (pair.g_ref, pair.g_slot):
        _, cache = forward_batch(params, g.features[None])
        for inputs, pre in cache["sigma"]:
            live = np.any(inputs[0] != 0.0, axis=-1)  # per-vertex: aggregate non-zero
            for z in pre[:-1]:
                vals = np.abs(z[live])
                if vals.size:
                    margin = min(margin, float(vals.min()))
    return margin
