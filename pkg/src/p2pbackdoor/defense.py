"""Aggregation rules a peer applies to its own delta and its neighbours' deltas.

Every rule takes ``own`` plus ``peers``; callers pass peers sorted by node id
so reductions happen in a fixed order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .learner import ParamVector, l2_norm, mean

KINDS = ("mean", "clip", "trimmed_mean", "two_norm_clip")


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "mean"
    clip_norm: Optional[float] = None
    trim: Optional[int] = None
    peer_norm: Optional[float] = None
    local_norm: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown aggregator {self.kind!r}; expected one of {KINDS}")
        needed = {
            "mean": (),
            "clip": ("clip_norm",),
            "trimmed_mean": ("trim",),
            "two_norm_clip": ("peer_norm", "local_norm"),
        }[self.kind]
        for name in ("clip_norm", "trim", "peer_norm", "local_norm"):
            value = getattr(self, name)
            if name in needed and value is None:
                raise ValueError(f"aggregator {self.kind!r} requires {name}")
            if name not in needed and value is not None:
                raise ValueError(f"aggregator {self.kind!r} does not take {name}")
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def clip_update(u: ParamVector, c: float) -> ParamVector:
    """Rescale ``u`` onto the L2 ball of radius ``c`` if it lies outside."""
    if c <= 0:
        raise ValueError(f"clip norm must be positive, got {c}")
    norm = l2_norm(u)
    return u / max(1.0, norm / c)


def aggregate_mean(own: ParamVector, peers: Sequence[ParamVector]) -> ParamVector:
    return mean([own, *peers])


def aggregate_clip(own: ParamVector, peers: Sequence[ParamVector], c: float) -> ParamVector:
    return aggregate_two_norm(own, peers, peer_norm=c, local_norm=c)


def aggregate_two_norm(own: ParamVector, peers: Sequence[ParamVector],
                       peer_norm: float, local_norm: float) -> ParamVector:
    """Mean with the own delta clipped to ``local_norm`` and peer deltas to ``peer_norm``."""
    return mean([clip_update(own, local_norm), *(clip_update(p, peer_norm) for p in peers)])


def aggregate_trimmed_mean(own: ParamVector, peers: Sequence[ParamVector], p: int) -> ParamVector:
    """Coordinate-wise mean after dropping the ``p`` largest and ``p`` smallest values."""
    stack = np.stack([own, *peers])
    if stack.shape[0] <= 2 * p:
        raise ValueError(f"trimmed mean with p={p} needs more than {2 * p} updates, got {stack.shape[0]}")
    srt = np.sort(stack, axis=0)
    return srt[p:stack.shape[0] - p].mean(axis=0)


def aggregate(spec: AggregatorSpec, own: ParamVector, peers: Sequence[ParamVector]) -> ParamVector:
    if spec.kind == "mean":
        return aggregate_mean(own, peers)
    if spec.kind == "clip":
        return aggregate_clip(own, peers, spec.clip_norm)
    if spec.kind == "two_norm_clip":
        return aggregate_two_norm(own, peers, spec.peer_norm, spec.local_norm)
    if 1 + len(peers) <= 2 * spec.trim:
        # too few updates to trim: a node whose live neighbourhood is this thin falls back to the mean
        return aggregate_mean(own, peers)
    return aggregate_trimmed_mean(own, peers, spec.trim)
