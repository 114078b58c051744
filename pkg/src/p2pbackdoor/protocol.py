"""Synchronous peer-to-peer gradient averaging with compromised nodes.

Each round every node trains from its round-start model, the resulting
deltas are exchanged along live learning-graph edges, and every node then
applies its aggregator to (own delta, received deltas). Malicious nodes train
on a poisoned shard for more epochs and boost the delta before sending it and
before using it themselves.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from . import centrality, data, graphgen
from .config import ExperimentConfig, aggregator_spec
from .defense import AggregatorSpec, aggregate
from .learner import ModelSpec, ParamVector, TrainConfig, init_model, local_update
from .metrics import RoundReport, score_round

log = logging.getLogger(__name__)

BENIGN, MALICIOUS = "benign", "malicious"
EXCHANGES = ("model", "delta")


@dataclass(frozen=True)
class NodeState:
    id: int
    role: str
    model: ParamVector
    shard: data.Shard
    live_peers: FrozenSet[int]
    train_cfg: TrainConfig
    boost: float = 1.0

    def __post_init__(self):
        if self.role not in (BENIGN, MALICIOUS):
            raise ValueError(f"unknown role {self.role!r}")
        if self.id in self.live_peers:
            raise ValueError(f"node {self.id} lists itself as a peer")


@dataclass(frozen=True)
class FaultPlan:
    r: int = 0
    seed: int = 0
    symmetric: bool = False

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"fault count r must be >= 0, got {self.r}")


def round_seed(master_seed: int, node: int, round_idx: int) -> int:
    """Per-(node, round) SGD seed; independent of scheduling order."""
    return int(np.random.SeedSequence([master_seed, node, round_idx]).generate_state(1)[0])


def _train(state: NodeState, round_idx: int, master_seed: int, spec: ModelSpec) -> ParamVector:
    cfg = replace(state.train_cfg, seed=round_seed(master_seed, state.id, round_idx))
    delta = local_update(state.model, state.shard, cfg, spec)
    if state.role == MALICIOUS:
        delta = delta * state.boost
    return delta


def run_round(states: Sequence[NodeState], round_idx: int, aggregator: AggregatorSpec = AggregatorSpec(),
              spec: Optional[ModelSpec] = None, master_seed: int = 0, threads: int = 1,
              exchange: str = "model") -> Tuple[List[NodeState], Dict[int, ParamVector]]:
    """Advance every node by one round.

    Returns the new states (same order) and the delta each node sent.
    """
    if exchange not in EXCHANGES:
        raise ValueError(f"unknown exchange mode {exchange!r}")
    spec = spec or ModelSpec()
    dims = {s.model.shape for s in states}
    if len(dims) > 1:
        raise ValueError(f"nodes hold models of different dimensions: {sorted(dims)}")
    by_id = {s.id: s for s in states}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            deltas = list(pool.map(lambda s: _train(s, round_idx, master_seed, spec), states))
    else:
        deltas = [_train(s, round_idx, master_seed, spec) for s in states]
    sent = {s.id: d for s, d in zip(states, deltas)}

    # barrier: aggregation only sees deltas computed from round-start models
    new_states = []
    for s in states:
        if exchange == "delta":
            received = [sent[j] for j in sorted(s.live_peers) if j in by_id]
        else:
            # peer j's proposed model, expressed as an update to this node's model
            received = [by_id[j].model + sent[j] - s.model for j in sorted(s.live_peers) if j in by_id]
        step = aggregate(aggregator, sent[s.id], received)
        new_states.append(replace(s, model=s.model + step))
    return new_states, sent


def apply_faults(t: graphgen.Topology, states: Sequence[NodeState], plan: FaultPlan) -> List[NodeState]:
    """Drop ``r`` benign neighbours from each benign node's live peer set.

    Malicious neighbours are never dropped. By default removal is one-sided
    (u stops hearing v); with ``plan.symmetric`` the edge is cut both ways.
    """
    if plan.r == 0:
        return list(states)
    roles = {s.id: s.role for s in states}
    live = {s.id: set(s.live_peers) for s in states}
    for s in sorted(states, key=lambda s: s.id):
        if s.role != BENIGN:
            continue
        candidates = sorted(v for v in t.neighbors(s.id) if roles.get(v) == BENIGN)
        r = min(plan.r, len(candidates))
        if r == 0:
            continue
        rng = np.random.default_rng([plan.seed, s.id, 0xFA17])
        for v in rng.choice(candidates, size=r, replace=False):
            live[s.id].discard(int(v))
            if plan.symmetric:
                live[int(v)].discard(s.id)
    return [replace(s, live_peers=frozenset(live[s.id])) for s in states]


# --------------------------------------------------------------- experiment

@dataclass
class ExperimentResult:
    seed: int
    topology: graphgen.Topology
    adversaries: List[int]
    hops: Dict[int, int]
    reports: List[RoundReport] = field(default_factory=list)


@lru_cache(maxsize=4)
def _synthetic_pair(train_n: int, test_n: int, seed: int, prototype_seed: int, jitter: float):
    train = data.synthetic(train_n, seed=seed, prototype_seed=prototype_seed, name="synthetic-train",
                           split="train", jitter=jitter)
    test = data.synthetic(test_n, seed=seed, prototype_seed=prototype_seed, name="synthetic-test",
                          split="test", jitter=jitter)
    return train, test


@lru_cache(maxsize=2)
def _idx_pair(name: str, path: Optional[str]):
    return data.load(name, path, "train"), data.load(name, path, "test")


def load_datasets(cfg: ExperimentConfig, seed: int, data_dir: Optional[str] = None):
    ds, n = cfg.dataset, cfg.graph.n
    if ds.name == "synthetic":
        return _synthetic_pair(n * ds.samples_per_node, ds.test_size, ds.synthetic_seed,
                               ds.prototype_seed, ds.jitter)
    train, test = _idx_pair(ds.name, data_dir or ds.path)
    if ds.samples_per_node is not None:
        train = data.take(train, n * ds.samples_per_node, seed=seed)
    return train, data.take(test, ds.test_size, seed=0)


def build_topology(cfg: ExperimentConfig, seed: int) -> graphgen.Topology:
    g = cfg.graph
    return graphgen.generate(g.family, g.n, cfg.resolved_graph_params(), seed if g.seed is None else g.seed)


def backdoor_spec(cfg: ExperimentConfig) -> data.BackdoorSpec:
    a = cfg.attack
    trig = data.Trigger(size=a.trigger.size, position=a.trigger.position, value=a.trigger.value)
    return data.BackdoorSpec(pdr=a.pdr, target_class=a.target_class, trigger=trig)


def setup(cfg: ExperimentConfig, seed: int, data_dir: Optional[str] = None):
    """Build topology, adversary set, node states and the evaluation split for one seed."""
    topo = build_topology(cfg, seed)
    adversaries = centrality.select_nodes(topo, cfg.attack.strategy, cfg.attack.k, seed=seed)
    train, test = load_datasets(cfg, seed, data_dir)
    bd = backdoor_spec(cfg)
    split = data.make_eval_split(test, bd)
    shards = data.partition_iid(train, topo.n, seed=seed)
    spec = ModelSpec(hidden_dim=cfg.training.hidden_dim)
    f0 = init_model(spec, seed)
    tr = cfg.training
    benign_cfg = TrainConfig(tr.learning_rate, tr.batch_size, tr.local_epochs, seed, tr.weight_decay)
    adv_cfg = TrainConfig(tr.learning_rate, tr.batch_size, cfg.attack.adv_epochs, seed, tr.weight_decay)
    bad = set(adversaries)
    states = []
    for v in range(topo.n):
        if v in bad:
            states.append(NodeState(v, MALICIOUS, f0.copy(), data.poison_shard(shards[v], bd, seed),
                                    topo.neighbors(v), adv_cfg, cfg.attack.boost))
        else:
            states.append(NodeState(v, BENIGN, f0.copy(), shards[v], topo.neighbors(v), benign_cfg))
    states = apply_faults(topo, states, FaultPlan(cfg.faults.r, seed, cfg.faults.symmetric))
    hops = centrality.hop_profile(topo, adversaries) if adversaries else {}
    return topo, adversaries, hops, states, split, spec


def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None, threads: int = 1,
                   data_dir: Optional[str] = None) -> ExperimentResult:
    """Run all rounds for one seed, scoring every ``eval_every`` rounds and at the end."""
    seed = cfg.seeds[0] if seed is None else seed
    topo, adversaries, hops, states, split, spec = setup(cfg, seed, data_dir)
    agg = aggregator_spec(cfg)
    roles = {s.id: s.role for s in states}
    result = ExperimentResult(seed=seed, topology=topo, adversaries=adversaries, hops=hops)
    rounds, every = cfg.training.rounds, cfg.training.eval_every
    for t in range(1, rounds + 1):
        states, _ = run_round(states, t, agg, spec, master_seed=seed, threads=threads,
                              exchange=cfg.training.exchange)
        if t % every == 0 or t == rounds:
            report = score_round({s.id: s.model for s in states}, split, cfg.attack.target_class,
                                 hops, round_idx=t, roles=roles, spec=spec)
            result.reports.append(report)
            log.info("seed=%d round=%d clean_acc=%.4f attack_success=%.4f", seed, t,
                     report.mean_clean_acc, report.mean_attack_success)
    return result
