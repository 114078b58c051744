"""Clean accuracy / attack success per node, per hop distance, and across seeds."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .data import EvalSplit
from .learner import ModelSpec, ParamVector, evaluate

NO_ADVERSARY = -1  # hop value when the run has no adversaries


@dataclass
class NodeScore:
    clean_acc: float
    attack_success: float
    hop: int
    role: str = "benign"


@dataclass
class HopRow:
    mean_clean_acc: float
    mean_attack_success: float
    node_count: int


@dataclass
class RoundReport:
    round: int
    per_node: Dict[int, NodeScore]
    mean_clean_acc: float = 0.0
    mean_attack_success: float = 0.0
    per_hop: Dict[int, HopRow] = field(default_factory=dict)

    @classmethod
    def from_nodes(cls, round_idx: int, per_node: Mapping[int, NodeScore]) -> "RoundReport":
        """Fill the all-client means and the per-hop grouping from node rows."""
        if not per_node:
            raise ValueError("a round report needs at least one node")
        ids = sorted(per_node)
        rows = {i: per_node[i] for i in ids}
        groups: Dict[int, List[NodeScore]] = defaultdict(list)
        for i in ids:
            groups[rows[i].hop].append(rows[i])
        per_hop = {
            h: HopRow(
                mean_clean_acc=_mean(r.clean_acc for r in g),
                mean_attack_success=_mean(r.attack_success for r in g),
                node_count=len(g),
            )
            for h, g in sorted(groups.items())
        }
        return cls(
            round=round_idx,
            per_node=rows,
            mean_clean_acc=_mean(r.clean_acc for r in rows.values()),
            mean_attack_success=_mean(r.attack_success for r in rows.values()),
            per_hop=per_hop,
        )


def _mean(values) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals)


def score_round(models: Mapping[int, ParamVector], split: EvalSplit, target: int,
                hops: Optional[Mapping[int, int]] = None, round_idx: int = 0,
                roles: Optional[Mapping[int, str]] = None,
                spec: Optional[ModelSpec] = None) -> RoundReport:
    if not models:
        raise ValueError("score_round needs at least one model")
    if len(split.clean) == 0 or len(split.backdoored) == 0:
        raise ValueError("empty evaluation set")
    hops = hops or {}
    roles = roles or {}
    per_node = {}
    for i in sorted(models):
        acc, _ = evaluate(models[i], split.clean, spec=spec)
        _, success = evaluate(models[i], split.backdoored, target=target, spec=spec)
        per_node[i] = NodeScore(clean_acc=acc, attack_success=success,
                                hop=hops.get(i, NO_ADVERSARY), role=roles.get(i, "benign"))
    return RoundReport.from_nodes(round_idx, per_node)


@dataclass
class TrialPoint:
    round: int
    hop: Optional[int]  # None for the all-node row
    mean_clean_acc: float
    std_clean_acc: float
    mean_attack_success: float
    std_attack_success: float
    n_seeds: int
    node_count: float


def _mean_std(values: Sequence[float]):
    # shifted by the first value so identical inputs give that value and zero spread exactly
    vals = [float(v) for v in values]
    dev = [v - vals[0] for v in vals]
    shift = math.fsum(dev) / len(vals)
    mean = vals[0] + shift
    if len(vals) < 2:
        return mean, 0.0
    var = math.fsum((d - shift) ** 2 for d in dev) / (len(vals) - 1)
    return mean, math.sqrt(var)


def aggregate_trials(series: Sequence[Sequence[RoundReport]]) -> List[TrialPoint]:
    """Pointwise mean and sample std across seeds, overall and per hop.

    A hop row is averaged over the seeds in which that hop occurs.
    """
    if not series:
        raise ValueError("no trials to aggregate")
    grid = [r.round for r in series[0]]
    for s in series[1:]:
        if [r.round for r in s] != grid:
            raise ValueError("mismatched round grids across trials")
    out: List[TrialPoint] = []
    for k, rnd in enumerate(grid):
        reps = [s[k] for s in series]
        acc = _mean_std([r.mean_clean_acc for r in reps])
        att = _mean_std([r.mean_attack_success for r in reps])
        nodes = float(np.mean([len(r.per_node) for r in reps]))
        out.append(TrialPoint(rnd, None, acc[0], acc[1], att[0], att[1], len(reps), nodes))
        for h in sorted({h for r in reps for h in r.per_hop}):
            rows = [r.per_hop[h] for r in reps if h in r.per_hop]
            acc = _mean_std([x.mean_clean_acc for x in rows])
            att = _mean_std([x.mean_attack_success for x in rows])
            out.append(TrialPoint(rnd, h, acc[0], acc[1], att[0], att[1], len(rows),
                                  float(np.mean([x.node_count for x in rows]))))
    return out
