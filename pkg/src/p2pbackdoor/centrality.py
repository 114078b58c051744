"""Node scoring for adversary placement and hop-distance profiles."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List

import numpy as np

from .graphgen import GraphError, Topology, local_clustering

STRATEGIES = ("random", "max_degree", "max_ens", "max_pagerank", "max_clustering")

PAGERANK_DAMPING = 0.85
PAGERANK_TOL = 1e-10
PAGERANK_MAX_ITER = 10_000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    tie_break: str = "lowest_id"

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown selection strategy {self.kind!r}; expected one of {STRATEGIES}")
        if self.tie_break != "lowest_id":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


def _check(t: Topology, v: int) -> None:
    if not 0 <= v < t.n:
        raise GraphError(f"node id {v} out of range for n={t.n}")


def degree_score(t: Topology, v: int) -> float:
    _check(t, v)
    return float(t.degree(v))


def ens_score(t: Topology, v: int) -> float:
    """Borgatti effective size ``n - 2t/n`` of the ego network, ego excluded."""
    _check(t, v)
    ego = t.adjacency[v]
    size = len(ego)
    if size == 0:
        return 0.0
    ties = sum(len(t.adjacency[u] & ego) for u in ego) // 2
    return size - 2.0 * ties / size


def clustering_coefficient(t: Topology, v: int) -> float:
    _check(t, v)
    return local_clustering(t, v)


def pagerank(t: Topology, damping: float = PAGERANK_DAMPING, tol: float = PAGERANK_TOL,
             max_iter: int = PAGERANK_MAX_ITER) -> Dict[int, float]:
    """Power-iteration PageRank with each undirected edge as two links.

    Iterates until the L1 change between successive vectors drops below
    ``tol``. Isolated nodes spread their mass uniformly.
    """
    if not 0.0 < damping < 1.0:
        raise ValueError(f"damping must be in (0, 1), got {damping}")
    n = t.n
    adj = np.zeros((n, n))
    for u, v in t.edges:
        adj[u, v] = adj[v, u] = 1.0
    deg = adj.sum(axis=1)
    dangling = deg == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, deg))
    # column-stochastic transition: P[v, u] = 1/deg(u) for each link u->v
    trans = adj.T * inv[None, :]
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (trans @ x + x[dangling].sum() / n) + (1.0 - damping) / n
        delta = np.abs(nxt - x).sum()
        x = nxt
        if delta < tol:
            return {v: float(x[v]) for v in range(n)}
    raise ConvergenceError(f"pagerank did not converge within {max_iter} iterations")


def scores(t: Topology, kind: str) -> Dict[int, float]:
    if kind == "max_degree":
        return {v: degree_score(t, v) for v in range(t.n)}
    if kind == "max_ens":
        return {v: ens_score(t, v) for v in range(t.n)}
    if kind == "max_clustering":
        return {v: clustering_coefficient(t, v) for v in range(t.n)}
    if kind == "max_pagerank":
        return pagerank(t)
    raise ValueError(f"strategy {kind!r} has no score")


def top_k(score: Dict[int, float], k: int) -> List[int]:
    # highest score first, lowest id breaks ties
    return sorted(score, key=lambda v: (-score[v], v))[:k]


def select_nodes(t: Topology, strategy, k: int, seed: int = 0) -> List[int]:
    if isinstance(strategy, str):
        strategy = SelectionStrategy(strategy)
    if k < 0 or k > t.n:
        raise ValueError(f"cannot select k={k} nodes from a graph of {t.n}")
    if k == 0:
        return []
    if strategy.kind == "random":
        rng = np.random.default_rng([seed, 0x5E1EC7])
        return [int(v) for v in rng.choice(t.n, size=k, replace=False)]
    return top_k(scores(t, strategy.kind), k)


def hop_profile(t: Topology, adversaries: Iterable[int]) -> Dict[int, int]:
    """Distance from each node to its nearest adversary (multi-source BFS).

    Nodes unreachable from every adversary are omitted.
    """
    srcs = sorted(set(adversaries))
    if not srcs:
        raise ValueError("hop_profile needs a non-empty adversary set")
    for v in srcs:
        _check(t, v)
    dist = {v: 0 for v in srcs}
    queue = deque(srcs)
    while queue:
        u = queue.popleft()
        for w in t.adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dict(sorted(dist.items()))
