"""Structure2vec graph embedding network: parameters, forward/backward, persistence.

Vertex update, for ``l = 1..L``::

    u[l, k] = tanh(W1 @ R[k] + sigma(sum(u[l-1, j] for j in in_neighbors(k))))

with ``sigma(x) = P1 @ relu(P2 @ ... relu(PH @ x))`` and the graph embedding
``U = W2 @ sum_k u[L, k]``. The initial vertex states default to zero.

All routines operate on a batch of graphs at once; feature arrays have shape
(B, 3, d) and vertex states (B, 3, p).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .acfg import FEATURE_DIM, Acfg, NormStats, adjacency
from .errors import CorruptFileError, ShapeMismatchError, UnsupportedVersionError

FORMAT_VERSION = 1

_ADJ = adjacency()


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    p: int
    d: int
    L: int
    H: int
    W1: np.ndarray
    P: tuple[np.ndarray, ...]
    W2: np.ndarray
    norm_stats: NormStats | None = None

    def __post_init__(self):
        if self.p < 1 or self.L < 1:
            raise ValueError(f"p and L must be >= 1 (p={self.p}, L={self.L})")
        if self.H < 2:
            raise ValueError(f"H must be >= 2, got {self.H}")
        if self.d != FEATURE_DIM:
            raise ValueError(f"d must be {FEATURE_DIM}, got {self.d}")
        object.__setattr__(self, "W1", _frozen(self.W1))
        object.__setattr__(self, "W2", _frozen(self.W2))
        object.__setattr__(self, "P", tuple(_frozen(m) for m in self.P))
        p, d = self.p, self.d
        if self.W1.shape != (p, d):
            raise ShapeMismatchError(f"W1 has shape {self.W1.shape}, expected {(p, d)}")
        if len(self.P) != self.H:
            raise ShapeMismatchError(f"expected {self.H} P matrices, got {len(self.P)}")
        for h, m in enumerate(self.P, 1):
            if m.shape != (p, p):
                raise ShapeMismatchError(f"P{h} has shape {m.shape}, expected {(p, p)}")
        if self.W2.shape != (p, p):
            raise ShapeMismatchError(f"W2 has shape {self.W2.shape}, expected {(p, p)}")
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise ValueError("model parameters must be finite")

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays in canonical order ``W1, P1..PH, W2``."""
        return [self.W1, *self.P, self.W2]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ModelParams":
        return ModelParams(self.p, self.d, self.L, self.H, arrays[0], tuple(arrays[1:-1]), arrays[-1], self.norm_stats)

    def with_norm_stats(self, stats: NormStats) -> "ModelParams":
        return ModelParams(self.p, self.d, self.L, self.H, self.W1, self.P, self.W2, stats)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            (self.p, self.d, self.L, self.H, self.norm_stats) == (other.p, other.d, other.L, other.H, other.norm_stats)
            and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))
        )


@dataclass
class Gradients:
    W1: np.ndarray
    P: list[np.ndarray]
    W2: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.W1, *self.P, self.W2]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(np.zeros_like(params.W1), [np.zeros_like(m) for m in params.P], np.zeros_like(params.W2))


def init_params(p: int = 64, d: int = FEATURE_DIM, L: int = 2, H: int = 2, seed: int = 0) -> ModelParams:
    if p < 1 or L < 1 or H < 2 or d != FEATURE_DIM:
        raise ValueError(f"invalid dimensions p={p}, d={d}, L={L}, H={H}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(p)
    W1 = rng.uniform(-bound, bound, size=(p, d))
    P = tuple(rng.uniform(-bound, bound, size=(p, p)) for _ in range(H))
    W2 = rng.uniform(-bound, bound, size=(p, p))
    return ModelParams(p, d, L, H, W1, P, W2)


# -- sigma ------------------------------------------------------------------

def _sigma_forward(P: Sequence[np.ndarray], x: np.ndarray):
    """Apply P_H first and P_1 last; relu between consecutive layers."""
    inputs, pre = [], []
    h = x
    for i, m in enumerate(reversed(P)):
        inputs.append(h)
        z = h @ m.T
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(P) - 1 else z
    return h, (inputs, pre)


def _sigma_backward(P: Sequence[np.ndarray], cache, g: np.ndarray, grads: list[np.ndarray]) -> np.ndarray:
    """Accumulate dP into ``grads`` (ordered P1..PH) and return d/dx."""
    inputs, pre = cache
    H = len(P)
    for i in reversed(range(H)):
        h = H - 1 - i  # index into P (P1 is index 0)
        if i < H - 1:
            g = g * (pre[i] > 0.0)
        x = inputs[i]
        grads[h] += g.reshape(-1, g.shape[-1]).T @ x.reshape(-1, x.shape[-1])
        g = g @ P[h]
    return g


def sigma(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (params.p,):
        raise ValueError(f"sigma expects vectors of length {params.p}, got shape {x.shape}")
    out, _ = _sigma_forward(params.P, x)
    return out


# -- forward / backward -------------------------------------------------------

@dataclass
class Embedding:
    """Graph embedding ``U`` plus the per-vertex states of every iteration."""

    vector: np.ndarray
    vertex_states: np.ndarray  # (L, 3, p); vertex_states[-1] is u^L
    _cache: dict = field(default=None, repr=False)


def _stack_features(graphs) -> np.ndarray:
    if isinstance(graphs, np.ndarray):
        return graphs
    return np.stack([g.features for g in graphs])


def forward_batch(params: ModelParams, features: np.ndarray, u0: np.ndarray | None = None):
    """Embed a batch of graphs. Returns ``(U, cache)`` with ``U`` of shape (B, p)."""
    R = np.asarray(features, dtype=np.float64)
    if R.ndim != 3 or R.shape[1:] != (3, params.d):
        raise ValueError(f"features must have shape (B, 3, {params.d}), got {R.shape}")
    B = R.shape[0]
    u = np.zeros((B, 3, params.p)) if u0 is None else np.broadcast_to(u0, (B, 3, params.p)).astype(np.float64)
    W1R = R @ params.W1.T
    states, sig_caches = [], []
    for _ in range(params.L):
        agg = np.einsum("kj,bjp->bkp", _ADJ, u)
        s, sc = _sigma_forward(params.P, agg)
        u = np.tanh(W1R + s)
        states.append(u)
        sig_caches.append(sc)
    pooled = u.sum(axis=1)
    U = pooled @ params.W2.T
    return U, {"R": R, "states": states, "sigma": sig_caches, "pooled": pooled}


def backward_batch(params: ModelParams, cache: dict, gU: np.ndarray, grads: Gradients) -> None:
    """Accumulate parameter gradients of ``sum(gU * U)`` into ``grads``."""
    grads.W2 += gU.T @ cache["pooled"]
    g_u = np.broadcast_to((gU @ params.W2)[:, None, :], cache["states"][-1].shape)
    R = cache["R"]
    for l in reversed(range(params.L)):
        u = cache["states"][l]
        g_pre = g_u * (1.0 - u * u)
        grads.W1 += np.einsum("bkp,bkd->pd", g_pre, R)
        g_agg = _sigma_backward(params.P, cache["sigma"][l], g_pre, grads.P)
        g_u = np.einsum("kj,bkp->bjp", _ADJ, g_agg)


def forward(params: ModelParams, g: Acfg, u0: np.ndarray | None = None) -> Embedding:
    U, cache = forward_batch(params, g.features[None], u0)
    return Embedding(U[0], np.stack([s[0] for s in cache["states"]]), cache)


def embed_many(params: ModelParams, graphs: Sequence[Acfg], chunk: int = 4096) -> np.ndarray:
    if not graphs:
        return np.zeros((0, params.p))
    R = _stack_features(graphs)
    return np.concatenate([forward_batch(params, R[i:i + chunk])[0] for i in range(0, len(R), chunk)])


# -- persistence ----------------------------------------------------------------

def params_to_json(params: ModelParams) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "p": params.p,
        "d": params.d,
        "L": params.L,
        "H": params.H,
        "W1": params.W1.tolist(),
        "P": [m.tolist() for m in params.P],
        "W2": params.W2.tolist(),
        "norm_stats": None if params.norm_stats is None else params.norm_stats.to_json(),
    }


def dumps_model(params: ModelParams) -> str:
    return json.dumps(params_to_json(params), separators=(",", ":")) + "\n"


def loads_model(text: str) -> ModelParams:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or "format_version" not in obj:
        raise CorruptFileError("model file lacks a format_version field")
    if obj["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format_version {obj['format_version']!r}")
    try:
        p, d, L, H = (int(obj[k]) for k in ("p", "d", "L", "H"))
        W1 = np.array(obj["W1"], dtype=np.float64)
        P = tuple(np.array(m, dtype=np.float64) for m in obj["P"])
        W2 = np.array(obj["W2"], dtype=np.float64)
        stats = None if obj.get("norm_stats") is None else NormStats.from_json(obj["norm_stats"])
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"model file missing or malformed field: {exc!r}") from None
    except ValueError as exc:
        # ragged nested lists
        raise ShapeMismatchError(str(exc)) from None
    return ModelParams(p, d, L, H, W1, P, W2, stats)


def save_model(params: ModelParams, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(params))


def load_model(path: str | os.PathLike) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
