"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL (or SKIP when required data is absent) line,
repeated in the pytest terminal summary. Criteria whose quantitative target is
not met still fail here; they are not relaxed.
"""
import time
from functools import lru_cache

import numpy as np
import pytest

from p2pbackdoor import centrality, cli, config, data, defense, graphgen, learner, protocol
from p2pbackdoor.graphgen import Topology

from . import oracles
from .conftest import record

EMNIST = "emnist_digits"


def _desk_dataset():
    """Reduced EMNIST when the IDX files are present, else the synthetic stand-in."""
    if data.idx_available(EMNIST):
        return {"dataset.name": EMNIST, "dataset.samples_per_node": 100, "dataset.test_size": 2000}
    return {"dataset.name": "synthetic", "dataset.samples_per_node": 100, "dataset.test_size": 2000}


def _final_key(ov, seed):
    """Final-round report of one run, cached across criteria that share a configuration."""
    items = tuple(sorted((k, tuple(sorted(v.items())) if isinstance(v, dict) else v) for k, v in ov.items()))
    return _final_hashable(items, seed)


@lru_cache(maxsize=None)
def _final_hashable(items, seed):
    ov = {k: dict(v) if isinstance(v, tuple) else v for k, v in items}
    ov.setdefault("training.eval_every", ov.get("training.rounds", 70))
    cfg = config.reference_config(**ov)
    return protocol.run_experiment(cfg, seed).reports[-1]


def runs(seeds=(0, 1, 2), **ov):
    full = {**_desk_dataset(), **ov}
    return [_final_key(full, s) for s in seeds]


def _fmt(xs):
    return "[" + ", ".join(f"{x:.3f}" for x in xs) + "]"


# ------------------------------------------------------------------ 1

def test_c01_topology_fidelity():
    expected = {"erdos_renyi": 166, "watts_strogatz": 360, "barabasi_albert": 576, "complete": 1770}
    t0 = time.perf_counter()
    got = {}
    for fam in graphgen.FAMILIES:
        g = graphgen.generate(fam, 60, graphgen.default_params(fam, 60), 0)
        got[fam] = (len(g.edges), graphgen.stats(g))
    elapsed = time.perf_counter() - t0
    edges_ok = all(got[f][0] == expected[f] for f in expected)
    # density and mean degree follow from the edge count at n=60
    cols_ok = all(
        f"{st.density:.2f}" == f"{2 * expected[f] / (60 * 59):.2f}"
        and f"{st.mean_degree:.2f}" == f"{2 * expected[f] / 60:.2f}"
        for f, (_, st) in got.items())
    table = cli.stats_table(config.reference_config(), 0)
    row = {line[:18].strip(): line[18:].split() for line in table.splitlines()}
    cli_ok = row["Density"] == ["0.09", "0.20", "0.33", "1.00"] and row["Mean Degree"] == ["5.53", "12.00", "19.20", "59.00"]
    ok = edges_ok and cols_ok and cli_ok and elapsed < 1.0
    record(1, ok, f"edges={ {f: e for f, (e, _) in got.items()} } density/mean-degree columns ok={cols_ok and cli_ok} "
                  f"runtime={elapsed:.2f}s (<1s)")
    assert ok


# ------------------------------------------------------------------ 2

def test_c02_centrality_oracles():
    rng = np.random.default_rng(20240)
    t0 = time.perf_counter()
    worst_pr, exact_ok = 0.0, True
    for _ in range(200):
        n, edges = oracles.random_connected_graph(rng, n_max=10)
        t = Topology.from_edges(n, edges)
        for v in range(n):
            exact_ok &= centrality.degree_score(t, v) == oracles.degree(n, edges, v)
            exact_ok &= centrality.ens_score(t, v) == oracles.ens(n, edges, v)
            exact_ok &= centrality.clustering_coefficient(t, v) == oracles.clustering(n, edges, v)
        pr = centrality.pagerank(t)
        ref = oracles.pagerank_power(n, edges, iters=3000)
        worst_pr = max(worst_pr, max(abs(pr[v] - ref[v]) for v in range(n)))
    elapsed = time.perf_counter() - t0
    ok = bool(exact_ok) and worst_pr <= 1e-8 and elapsed < 30
    record(2, ok, f"degree/ENS/clustering exact={bool(exact_ok)} max PageRank err={worst_pr:.1e} (<=1e-8) "
                  f"runtime={elapsed:.1f}s (<30s)")
    assert ok


# ------------------------------------------------------------------ 3

def test_c03_defense_properties():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    clip_ok = True
    for _ in range(1000):
        v = rng.normal(0, rng.uniform(0.01, 10), size=int(rng.integers(1, 64)))
        c = float(rng.uniform(0.05, 5))
        out = defense.clip_update(v, c)
        scale = max(1.0, float(np.linalg.norm(v)) / c)
        # norm bound up to one rounding step of the division; direction exact
        clip_ok &= bool(np.linalg.norm(out) <= c * (1 + 1e-15))
        clip_ok &= bool(np.array_equal(out, v / scale))
    tm_ok = True
    for _ in range(300):
        p = int(rng.integers(0, 4))
        vs = [rng.normal(size=16) for _ in range(int(rng.integers(2 * p + 1, 2 * p + 12)))]
        tm_ok &= bool(np.array_equal(defense.aggregate_trimmed_mean(vs[0], vs[1:], p),
                                     oracles.trimmed_mean_sort_slice(vs, p)))
    worst = 0.0
    for _ in range(300):
        own, peers = rng.normal(size=16) * 3, [rng.normal(size=16) * 3 for _ in range(int(rng.integers(0, 8)))]
        c = float(rng.uniform(0.1, 5))
        a = defense.aggregate_two_norm(own, peers, c, c)
        b = defense.aggregate(defense.AggregatorSpec("clip", clip_norm=c), own, peers)
        worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - t0
    ok = clip_ok and tm_ok and worst <= 1e-12 and elapsed < 10
    record(3, ok, f"clip norm/direction ok={clip_ok} trimmed mean == sort-slice={tm_ok} "
                  f"two_norm vs clip max diff={worst:.1e} (<=1e-12) runtime={elapsed:.1f}s (<10s)")
    assert ok


# ------------------------------------------------------------------ 4

def test_c04_no_attack_convergence():
    t0 = time.perf_counter()
    reps = runs(**{"dataset.name": "synthetic", "graph.n": 20, "graph.params": {"k": 6, "beta": 0.45},
                   "attack.k": 0, "training.rounds": 30})
    elapsed = time.perf_counter() - t0
    acc = float(np.mean([r.mean_clean_acc for r in reps]))
    att = float(np.mean([r.mean_attack_success for r in reps]))
    ok_acc, ok_att = acc >= 0.90, abs(att - 0.10) <= 0.05
    ok = ok_acc and ok_att and elapsed < 300
    record(4, ok, f"clean_acc={acc:.3f} (>=0.90: {ok_acc}) attack_success={att:.3f} "
                  f"(0.10+-0.05: {ok_att}) runtime={elapsed:.0f}s (<300s)")
    assert ok


# ------------------------------------------------------------------ 5, 6

def _emnist_or_skip(criterion):
    if not data.idx_available(EMNIST):
        record(criterion, "SKIP", f"{EMNIST} IDX files not found (set ${data.DATA_DIR_ENV}); full-scale job not run")
        pytest.skip("EMNIST-digits not available")


def _emnist(**ov):
    full = {"dataset.name": EMNIST, "dataset.samples_per_node": None, "dataset.test_size": None}
    full.update(ov)
    return [_final_key(full, s) for s in (0, 1, 2)]


def test_c05_emnist_baseline():
    _emnist_or_skip(5)
    acc = float(np.mean([r.mean_clean_acc for r in _emnist(**{"attack.k": 0})]))
    ok = abs(acc - 0.92) <= 0.05
    record(5, ok, f"clean_acc={acc:.3f} (0.92+-0.05)")
    assert ok


def test_c06_emnist_attack():
    _emnist_or_skip(6)
    base = float(np.mean([r.mean_clean_acc for r in _emnist(**{"attack.k": 0})]))
    reps = _emnist()
    acc = float(np.mean([r.mean_clean_acc for r in reps]))
    att = float(np.mean([r.mean_attack_success for r in reps]))
    ok = att >= 0.25 and base - acc <= 0.05
    record(6, ok, f"attack_success={att:.3f} (>=0.25) clean drop={base - acc:.3f} (<=0.05)")
    assert ok


# ------------------------------------------------------------------ 7

def test_c07_pagerank_beats_random():
    t0 = time.perf_counter()
    pr = [r.mean_attack_success for r in runs()]
    rnd = [r.mean_attack_success for r in runs(**{"attack.strategy": "random"})]
    elapsed = time.perf_counter() - t0
    wins = sum(a >= b for a, b in zip(pr, rnd))
    ok = wins >= 2 and elapsed < 1800
    record(7, ok, f"data={_desk_dataset()['dataset.name']} pagerank={_fmt(pr)} random={_fmt(rnd)} "
                  f"pagerank>=random in {wins}/3 seeds (need 2) runtime={elapsed:.0f}s (<1800s)")
    assert ok


# ------------------------------------------------------------------ 8

def test_c08_faults_amplify():
    r0 = [r.mean_attack_success for r in runs()]
    r4 = [r.mean_attack_success for r in runs(**{"faults.r": 4})]
    ok = float(np.mean(r4)) > float(np.mean(r0))
    record(8, ok, f"attack_success r=0 {_fmt(r0)} mean={np.mean(r0):.4f}; r=4 {_fmt(r4)} mean={np.mean(r4):.4f} "
                  f"(need r=4 > r=0)")
    assert ok


# ------------------------------------------------------------------ 9

def test_c09_two_norm_defense():
    long = {"training.rounds": 200}
    base = runs(**long, **{"attack.k": 0})
    two = runs(**long, **{"attack.k": 6, "defense.kind": "two_norm_clip",
                          "defense.peer_norm": 0.1, "defense.local_norm": 1.0})
    clip = runs(**long, **{"attack.k": 6, "defense.kind": "clip", "defense.clip_norm": 0.25})
    trim = runs(**long, **{"attack.k": 6, "defense.kind": "trimmed_mean", "defense.trim": 1})
    mean = lambda reps, attr: float(np.mean([getattr(r, attr) for r in reps]))
    two_att, two_acc = mean(two, "mean_attack_success"), mean(two, "mean_clean_acc")
    base_acc = mean(base, "mean_clean_acc")
    clip_att, trim_att = mean(clip, "mean_attack_success"), mean(trim, "mean_attack_success")
    checks = {
        "two_norm attack<=0.10": two_att <= 0.10,
        "two_norm acc within 5pts": abs(two_acc - base_acc) <= 0.05,
        "clip0.25 attack>=0.30": clip_att >= 0.30,
        "trimmed p=1 attack>=0.60": trim_att >= 0.60,
    }
    ok = all(checks.values())
    record(9, ok, f"two_norm attack={two_att:.3f} acc={two_acc:.3f} (baseline {base_acc:.3f}); "
                  f"clip0.25 attack={clip_att:.3f}; trimmed attack={trim_att:.3f}; "
                  + ", ".join(f"{k}={v}" for k, v in checks.items()))
    assert ok


# ------------------------------------------------------------------ 10

def test_c10_determinism(tmp_path):
    cfg = config.reference_config(**{"graph.n": 20, "graph.params": {"k": 6, "beta": 0.45},
                                     "training.rounds": 10, "training.eval_every": 5, "seeds": [0, 1]})
    a = cli.run(cfg, output_dir=str(tmp_path / "serial"), threads=1)
    b = cli.run(cfg, output_dir=str(tmp_path / "threaded"), threads=4)
    same = all((a / f"raw_seed{s}.csv").read_bytes() == (b / f"raw_seed{s}.csv").read_bytes() for s in (0, 1))
    same_agg = (a / "aggregate.csv").read_bytes() == (b / "aggregate.csv").read_bytes()
    ok = same and same_agg
    record(10, ok, f"raw CSVs byte-identical serial vs 4 threads={same}, aggregate identical={same_agg}")
    assert ok


# ------------------------------------------------------------------ 11

def test_c11_gradient_check():
    spec = learner.ModelSpec()
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    imgs = data.synthetic(10, seed=11)
    for i in range(10):
        f = learner.init_model(spec, i)
        x, y = imgs.flat[i:i + 1].astype(np.float64), imgs.labels[i:i + 1]
        _, g = learner.loss_and_grad(spec, f, x, y)
        coords = rng.choice(spec.dim, size=10, replace=False)
        h = 1e-5
        for c in coords:
            e = np.zeros(spec.dim)
            e[c] = h
            num = (learner.loss_and_grad(spec, f + e, x, y)[0] - learner.loss_and_grad(spec, f - e, x, y)[0]) / (2 * h)
            denom = max(abs(num), abs(g[c]), 1e-8)
            worst = max(worst, abs(num - g[c]) / denom)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 10
    record(11, ok, f"max relative error={worst:.2e} over 10 inputs x 10 coords (<=1e-4) runtime={elapsed:.1f}s (<10s)")
    assert ok
