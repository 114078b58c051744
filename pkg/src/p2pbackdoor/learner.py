"""One-hidden-layer MLP on flat parameter vectors, trained with plain SGD.

A model is just a 1-D float64 array laid out as ``W1 | b1 | W2 | b2``; the
same layout is used for the deltas exchanged between peers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .data import Dataset, Shard

ParamVector = np.ndarray


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int = 784
    hidden_dim: int = 64
    num_classes: int = 10
    activation: str = "tanh"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.num_classes) < 1:
            raise ValueError("model dimensions must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def dim(self) -> int:
        i, h, c = self.input_dim, self.hidden_dim, self.num_classes
        return i * h + h + h * c + c

    def unpack(self, f: ParamVector):
        i, h, c = self.input_dim, self.hidden_dim, self.num_classes
        if f.shape != (self.dim,):
            raise ValueError(f"parameter vector has shape {f.shape}, model needs ({self.dim},)")
        o = 0
        w1 = f[o:o + i * h].reshape(i, h); o += i * h
        b1 = f[o:o + h]; o += h
        w2 = f[o:o + h * c].reshape(h, c); o += h * c
        b2 = f[o:o + c]
        return w1, b1, w2, b2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    local_epochs: int = 1
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.local_epochs < 1:
            raise ValueError("batch_size and local_epochs must be positive")


def _tanh(z):
    a = np.tanh(z)
    return a, 1.0 - a * a


def _softplus(z):
    a = np.logaddexp(0.0, z)
    return a, 1.0 / (1.0 + np.exp(-z))


_ACTIVATIONS = {"tanh": _tanh, "softplus": _softplus}


def init_model(spec: ModelSpec, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng([seed, 0x1417])
    i, h, c = spec.input_dim, spec.hidden_dim, spec.num_classes
    a1 = np.sqrt(6.0 / (i + h))
    a2 = np.sqrt(6.0 / (h + c))
    return np.concatenate([
        rng.uniform(-a1, a1, size=i * h), np.zeros(h),
        rng.uniform(-a2, a2, size=h * c), np.zeros(c),
    ])


def logits(spec: ModelSpec, f: ParamVector, x: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = spec.unpack(f)
    act = _ACTIVATIONS[spec.activation]
    hidden, _ = act(x @ w1 + b1)
    return hidden @ w2 + b2


def predict(spec: ModelSpec, f: ParamVector, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(spec, f, x), axis=1)


def loss_and_grad(spec: ModelSpec, f: ParamVector, x: np.ndarray, y: np.ndarray) -> Tuple[float, ParamVector]:
    """Mean softmax cross-entropy over the batch and its gradient."""
    w1, b1, w2, b2 = spec.unpack(f)
    act = _ACTIVATIONS[spec.activation]
    hidden, dact = act(x @ w1 + b1)
    z = hidden @ w2 + b2
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    m = len(y)
    loss = -logp[np.arange(m), y].mean()
    dz = np.exp(logp)
    dz[np.arange(m), y] -= 1.0
    dz /= m
    dh = (dz @ w2.T) * dact
    grad = np.concatenate([(x.T @ dh).ravel(), dh.sum(0), (hidden.T @ dz).ravel(), dz.sum(0)])
    return float(loss), grad


def dataset_loss(spec: ModelSpec, f: ParamVector, d: Dataset) -> float:
    return loss_and_grad(spec, f, d.flat.astype(np.float64), d.labels)[0]


def local_update(f: ParamVector, shard, cfg: TrainConfig, spec: Optional[ModelSpec] = None) -> ParamVector:
    """Run seeded mini-batch SGD from ``f`` and return ``f_trained - f``."""
    spec = spec or ModelSpec()
    d = shard.train if isinstance(shard, Shard) else shard
    if len(d) == 0:
        raise ValueError("local_update on an empty shard")
    x = d.flat.astype(np.float64)
    y = d.labels
    w = f.copy()
    rng = np.random.default_rng([cfg.seed, 0x5D])
    for _ in range(cfg.local_epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            _, g = loss_and_grad(spec, w, x[b], y[b])
            if cfg.weight_decay:
                g = g + cfg.weight_decay * w
            w -= cfg.learning_rate * g
    return w - f


def evaluate(f: ParamVector, d: Dataset, target: Optional[int] = None,
             spec: Optional[ModelSpec] = None) -> Tuple[float, float]:
    """Return (accuracy, fraction predicted as ``target``)."""
    if len(d) == 0:
        raise ValueError("evaluate on an empty dataset")
    pred = predict(spec or ModelSpec(), f, d.flat)
    acc = float(np.mean(pred == d.labels))
    rate = float(np.mean(pred == target)) if target is not None else 0.0
    return acc, rate


# ---------------------------------------------------------------- vector ops

def _same_dim(*vs: ParamVector) -> None:
    dims = {v.shape for v in vs}
    if len(dims) > 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def add(a: ParamVector, b: ParamVector) -> ParamVector:
    _same_dim(a, b)
    return a + b


def scale(v: ParamVector, c: float) -> ParamVector:
    return v * c


def l2_norm(v: ParamVector) -> float:
    return float(np.sqrt(np.dot(v, v)))


def mean(vs: Sequence[ParamVector]) -> ParamVector:
    """Elementwise mean; rows are summed in list order."""
    if not vs:
        raise ValueError("mean of an empty list")
    _same_dim(*vs)
    acc = np.array(vs[0], dtype=np.float64, copy=True)
    for v in vs[1:]:
        acc += v
    return acc / len(vs)


# ------------------------------------------------------------ serialization

_MAGIC = b"PV32"


def params_to_bytes(f: ParamVector) -> bytes:
    if not np.all(np.isfinite(f)):
        raise ValueError("refusing to serialize non-finite parameters")
    return _MAGIC + struct.pack("<Q", f.size) + f.astype("<f4").tobytes()


def params_from_bytes(blob: bytes) -> ParamVector:
    if blob[:4] != _MAGIC:
        raise ValueError("not a parameter blob")
    (dim,) = struct.unpack("<Q", blob[4:12])
    body = blob[12:]
    if len(body) != 4 * dim:
        raise ValueError(f"blob holds {len(body) // 4} values, header says {dim}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64)


def save_params(f: ParamVector, path) -> None:
    Path(path).write_bytes(params_to_bytes(f))


def load_params(path) -> ParamVector:
    return params_from_bytes(Path(path).read_bytes())
