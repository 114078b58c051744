"""Learning-graph generation and descriptive statistics.

Four families are supported: Erdos-Renyi (G(n, p) or exact edge count),
Watts-Strogatz, Barabasi-Albert, and the complete graph. Every generator is
driven by a numpy ``Generator`` seeded from ``(seed, attempt)`` so output is
reproducible, and disconnected draws are regenerated a bounded number of
times before giving up.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

FAMILIES = ("erdos_renyi", "watts_strogatz", "barabasi_albert", "complete")
MAX_ATTEMPTS = 100

# reference parameters at n=60 (166, 360, 576 and 1770 edges); scaled for other sizes.
# beta=0.45 gives WS clustering near 0.24 and diameter 3.
REFERENCE_N = 60
REFERENCE_PARAMS = {
    "erdos_renyi": {"m_edges": 166},
    "watts_strogatz": {"k": 12, "beta": 0.45},
    "barabasi_albert": {"m": 12},
    "complete": {},
}

Edge = Tuple[int, int]


class GraphError(ValueError):
    """Invalid generator parameters or an unconnectable draw."""


@dataclass(frozen=True)
class Topology:
    n: int
    edges: FrozenSet[Edge]
    family: str = "custom"
    gen_params: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"n must be positive, got {self.n}")
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={self.n}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj: List[Set[int]] = [set() for _ in range(self.n)]
        for u, v in norm:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Edge], **kw) -> "Topology":
        return cls(n=n, edges=frozenset(tuple(e) for e in edges), **kw)

    @property
    def adjacency(self) -> Tuple[FrozenSet[int], ...]:
        return self._adj  # type: ignore[attr-defined]

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def neighbors(self, v: int) -> FrozenSet[int]:
        if not 0 <= v < self.n:
            raise GraphError(f"node id {v} out of range for n={self.n}")
        return self._adj[v]  # type: ignore[attr-defined]

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def is_connected(self) -> bool:
        return len(bfs_distances(self, 0)) == self.n


def neighbors(t: Topology, v: int) -> FrozenSet[int]:
    return t.neighbors(v)


def bfs_distances(t: Topology, source: int) -> Dict[int, int]:
    """Hop distances from ``source`` to every reachable node."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in t.adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


# ----------------------------------------------------------------- generators

def _erdos_renyi(n: int, params: Mapping, rng: np.random.Generator) -> Set[Edge]:
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    if "m_edges" in params:
        m = int(params["m_edges"])
        chosen = rng.choice(len(pairs), size=m, replace=False)
        return {pairs[i] for i in chosen}
    p = float(params["p"])
    keep = rng.random(len(pairs)) < p
    return {e for e, k in zip(pairs, keep) if k}


def _watts_strogatz(n: int, params: Mapping, rng: np.random.Generator) -> Set[Edge]:
    k, beta = int(params["k"]), float(params["beta"])
    adj: List[Set[int]] = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    # rewire each lattice edge (u, u+j) once, keeping the edge count fixed
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() >= beta or v not in adj[u]:
                continue
            candidates = [w for w in range(n) if w != u and w not in adj[u]]
            if not candidates:
                continue
            w = candidates[int(rng.integers(len(candidates)))]
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    return {(u, v) for u in range(n) for v in adj[u] if u < v}


def _barabasi_albert(n: int, params: Mapping, rng: np.random.Generator) -> Set[Edge]:
    m = int(params["m"])
    # seed star on m+1 nodes, then each new node attaches to m distinct targets
    edges = {(0, v) for v in range(1, m + 1)}
    repeated = [0] * m + list(range(1, m + 1))
    for new in range(m + 1, n):
        targets: Set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for tgt in sorted(targets):
            edges.add((tgt, new))
        repeated.extend(sorted(targets))
        repeated.extend([new] * m)
    return edges


def _complete(n: int, params: Mapping, rng: np.random.Generator) -> Set[Edge]:
    return {(u, v) for u in range(n) for v in range(u + 1, n)}


_GENERATORS = {
    "erdos_renyi": _erdos_renyi,
    "watts_strogatz": _watts_strogatz,
    "barabasi_albert": _barabasi_albert,
    "complete": _complete,
}


def validate_params(family: str, n: int, params: Mapping) -> None:
    if family not in _GENERATORS:
        raise GraphError(f"unknown graph family {family!r}; expected one of {FAMILIES}")
    if n < 3:
        raise GraphError(f"n must be >= 3, got {n}")
    if family == "erdos_renyi":
        if ("p" in params) == ("m_edges" in params):
            raise GraphError("erdos_renyi needs exactly one of 'p' or 'm_edges'")
        if "p" in params and not 0.0 < float(params["p"]) < 1.0:
            raise GraphError(f"erdos_renyi p must be in (0, 1), got {params['p']}")
        if "m_edges" in params:
            m = int(params["m_edges"])
            if not n - 1 <= m <= n * (n - 1) // 2:
                raise GraphError(f"erdos_renyi m_edges={m} cannot give a connected graph on {n} nodes")
    elif family == "watts_strogatz":
        k, beta = int(params.get("k", -1)), float(params.get("beta", -1.0))
        if k < 2 or k % 2 or k >= n:
            raise GraphError(f"watts_strogatz k must be even with 2 <= k < n, got {k}")
        if not 0.0 <= beta <= 1.0:
            raise GraphError(f"watts_strogatz beta must be in [0, 1], got {beta}")
    elif family == "barabasi_albert":
        m = int(params.get("m", 0))
        if not 1 <= m < n:
            raise GraphError(f"barabasi_albert m must satisfy 1 <= m < n, got {m}")


def generate(family: str, n: int, gen_params: Optional[Mapping] = None, seed: int = 0) -> Topology:
    """Draw a connected topology.

    A disconnected draw is retried with the sub-seed ``(seed, attempt)``;
    after ``MAX_ATTEMPTS`` failures a :class:`GraphError` is raised.
    """
    params = dict(gen_params or {})
    validate_params(family, n, params)
    gen = _GENERATORS[family]
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        topo = Topology(n=n, edges=frozenset(gen(n, params, rng)), family=family,
                        gen_params=params, seed=seed)
        if topo.is_connected():
            return topo
    raise GraphError(f"{family}(n={n}, {params}) not connected after {MAX_ATTEMPTS} attempts")


def default_params(family: str, n: int) -> Dict[str, object]:
    """Parameters holding density near the n=60 reference graphs."""
    ref = dict(REFERENCE_PARAMS[family])
    if n == REFERENCE_N or family == "complete":
        return ref
    scale = n * (n - 1) / (REFERENCE_N * (REFERENCE_N - 1))
    if family == "erdos_renyi":
        ref["m_edges"] = max(n - 1, int(round(ref["m_edges"] * scale)))
    elif family == "watts_strogatz":
        density = ref["k"] / (REFERENCE_N - 1)
        k = int(round(density * (n - 1) / 2)) * 2
        ref["k"] = min(max(k, 2), n - 2 if n % 2 == 0 else n - 1)
    elif family == "barabasi_albert":
        target = 576 * scale
        # smallest m whose m*(n-m) reaches the scaled edge count
        m = next((m for m in range(1, n // 2 + 1) if m * (n - m) >= target), n // 2)
        ref["m"] = m
    return ref


# ----------------------------------------------------------------- statistics

@dataclass(frozen=True)
class GraphStats:
    num_nodes: int
    num_edges: int
    mean_degree: float
    density: float
    diameter: int
    radius: int
    mean_distance: float
    transitivity: float
    clustering_coef: float

    def as_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def triangles_through(t: Topology, v: int) -> int:
    nb = sorted(t.adjacency[v])
    return sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b in t.adjacency[a])


def local_clustering(t: Topology, v: int) -> float:
    d = t.degree(v)
    if d < 2:
        return 0.0
    return 2.0 * triangles_through(t, v) / (d * (d - 1))


def stats(t: Topology) -> GraphStats:
    n, m = t.n, len(t.edges)
    ecc = []
    total = 0
    for s in range(n):
        dist = bfs_distances(t, s)
        if len(dist) != n:
            raise GraphError("stats requires a connected topology")
        ecc.append(max(dist.values()))
        total += sum(dist.values())
    tri = [triangles_through(t, v) for v in range(n)]
    triples = sum(d * (d - 1) // 2 for d in (t.degree(v) for v in range(n)))
    return GraphStats(
        num_nodes=n,
        num_edges=m,
        mean_degree=2.0 * m / n,
        density=2.0 * m / (n * (n - 1)),
        diameter=max(ecc),
        radius=min(ecc),
        mean_distance=total / (n * (n - 1)),
        # sum(tri) counts each triangle three times, once per corner
        transitivity=(sum(tri) / triples) if triples else 0.0,
        clustering_coef=sum(local_clustering(t, v) for v in range(n)) / n,
    )


# ------------------------------------------------------------ serialization

def write_edgelist(t: Topology, path) -> None:
    lines = [f"n={t.n}"] + [f"{u} {v}" for u, v in t.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Topology:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise GraphError(f"{path}: missing 'n=<count>' header")
    n = int(lines[0][2:])
    edges = []
    for ln in lines[1:]:
        u, v = ln.split()
        edges.append((int(u), int(v)))
    return Topology.from_edges(n, edges)


def path_graph(n: int) -> Topology:
    return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)], family="path")


def star_graph(leaves: int) -> Topology:
    return Topology.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)], family="star")


def complete_graph(n: int) -> Topology:
    return Topology.from_edges(n, _complete(n, {}, None), family="complete")  # type: ignore[arg-type]
