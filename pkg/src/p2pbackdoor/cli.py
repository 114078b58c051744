"""Command-line entry point: run experiments, aggregate and report results.

    p2pbackdoor run CONFIG [--output-dir DIR] [--data-dir DIR] [--threads N] [--rounds N] [--seed S]
    p2pbackdoor aggregate RUN_DIR
    p2pbackdoor report RUN_DIR
    p2pbackdoor graph-stats CONFIG
    p2pbackdoor plan CONFIG [--scores CSV]
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__, centrality, graphgen
from .config import ConfigError, ExperimentConfig, parse_config
from .data import DATA_DIR_ENV
from .metrics import NodeScore, RoundReport, TrialPoint, aggregate_trials
from .protocol import ExperimentResult, build_topology, run_experiment

log = logging.getLogger("p2pbackdoor")

RAW_HEADER = ["run_seed", "round", "node_id", "role", "hop", "clean_acc", "attack_success"]
AGG_HEADER = ["round", "hop", "mean_clean_acc", "std_clean_acc", "mean_attack_success",
              "std_attack_success", "n_seeds", "node_count"]
AGGREGATE_FILE = "aggregate.csv"
MANIFEST_FILE = "manifest.json"


class ArtifactError(RuntimeError):
    pass


def fmt(x: float) -> str:
    return f"{x:.6g}"


def raw_path(run_dir: Path, seed: int) -> Path:
    return run_dir / f"raw_seed{seed}.csv"


# ---------------------------------------------------------------- artifacts

def write_raw(result: ExperimentResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for rep in result.reports:
            for node, row in rep.per_node.items():
                w.writerow([result.seed, rep.round, node, row.role, row.hop,
                            fmt(row.clean_acc), fmt(row.attack_success)])


def read_raw(path: Path) -> List[RoundReport]:
    """Rebuild per-round reports from a raw CSV; values are the rounded ones on disk."""
    if not path.exists():
        raise ArtifactError(f"raw results missing: {path}")
    rows: Dict[int, Dict[int, NodeScore]] = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_HEADER:
            raise ArtifactError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            try:
                rows[int(rec["round"])][int(rec["node_id"])] = NodeScore(
                    clean_acc=float(rec["clean_acc"]), attack_success=float(rec["attack_success"]),
                    hop=int(rec["hop"]), role=rec["role"])
            except (TypeError, ValueError) as exc:
                raise ArtifactError(f"{path}: corrupt row {rec}: {exc}") from None
    if not rows:
        raise ArtifactError(f"{path}: no result rows")
    return [RoundReport.from_nodes(r, rows[r]) for r in sorted(rows)]


def write_aggregate(points: Sequence[TrialPoint], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_HEADER)
        for p in points:
            w.writerow([p.round, "all" if p.hop is None else p.hop, fmt(p.mean_clean_acc),
                        fmt(p.std_clean_acc), fmt(p.mean_attack_success), fmt(p.std_attack_success),
                        p.n_seeds, fmt(p.node_count)])


def read_aggregate(path: Path) -> List[dict]:
    if not path.exists():
        raise ArtifactError("aggregate missing; re-run aggregation")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != AGG_HEADER:
            raise ArtifactError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def load_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST_FILE
    if not path.exists():
        raise ArtifactError(f"manifest missing: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: corrupt manifest ({exc})") from None


def aggregate_run(run_dir: Path) -> List[TrialPoint]:
    """Recompute ``aggregate.csv`` from the per-seed raw CSVs alone."""
    manifest = load_manifest(run_dir)
    series = [read_raw(raw_path(run_dir, s)) for s in manifest["seeds"]]
    points = aggregate_trials(series)
    write_aggregate(points, run_dir / AGGREGATE_FILE)
    return points


def run(cfg: ExperimentConfig, output_dir: Optional[str] = None, data_dir: Optional[str] = None,
        threads: int = 1) -> Path:
    run_dir = Path(output_dir or cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "software": "p2pbackdoor",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "runs": {},
    }
    for seed in cfg.seeds:
        result = run_experiment(cfg, seed, threads=threads, data_dir=data_dir)
        write_raw(result, raw_path(run_dir, seed))
        graphgen.write_edgelist(result.topology, run_dir / f"topology_seed{seed}.txt")
        manifest["runs"][str(seed)] = {
            "adversaries": result.adversaries,
            "topology": f"topology_seed{seed}.txt",
            "raw": raw_path(run_dir, seed).name,
        }
    (run_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    aggregate_run(run_dir)
    return run_dir


def summarize(run_dir: Path) -> str:
    """Final-round table: overall means, per-hop rows and per-seed spread."""
    manifest = load_manifest(run_dir)
    rows = read_aggregate(run_dir / AGGREGATE_FILE)
    if not rows:
        raise ArtifactError("aggregate is empty; re-run aggregation")
    last = max(int(r["round"]) for r in rows)
    lines = [f"run: {run_dir}  (seeds {manifest['seeds']}, final round {last})",
             f"{'group':<10}{'nodes':>8}{'clean_acc':>12}{'±':>3}{'std':<9}{'attack':>10}{'±':>3}{'std':<9}"]
    for r in rows:
        if int(r["round"]) != last:
            continue
        label = "all" if r["hop"] == "all" else f"hop {r['hop']}"
        lines.append(f"{label:<10}{float(r['node_count']):>8.1f}{float(r['mean_clean_acc']):>12.4f}"
                     f"{'':>3}{float(r['std_clean_acc']):<9.4f}{float(r['mean_attack_success']):>10.4f}"
                     f"{'':>3}{float(r['std_attack_success']):<9.4f}")
    lines.append("per seed (final round):")
    for s in manifest["seeds"]:
        rep = read_raw(raw_path(run_dir, s))[-1]
        lines.append(f"  seed {s:<6} clean_acc={rep.mean_clean_acc:.4f} attack_success={rep.mean_attack_success:.4f}")
    return "\n".join(lines)


def stats_table(cfg: ExperimentConfig, seed: int) -> str:
    """Summary statistics for all four families at the configured size, one column per family."""
    n = cfg.graph.n
    cols = {}
    for fam in graphgen.FAMILIES:
        params = cfg.resolved_graph_params() if fam == cfg.graph.family else graphgen.default_params(fam, n)
        cols[fam] = graphgen.stats(graphgen.generate(fam, n, params, seed))
    fields = [("# nodes", "num_nodes"), ("# edges", "num_edges"), ("Mean Degree", "mean_degree"),
              ("Density", "density"), ("Diameter", "diameter"), ("Radius", "radius"),
              ("Mean Distance", "mean_distance"), ("Transitivity", "transitivity"),
              ("Clustering coef.", "clustering_coef")]
    out = [f"{'name':<18}" + "".join(f"{f:>17}" for f in cols)]
    for label, attr in fields:
        out.append(f"{label:<18}" + "".join(f"{getattr(st, attr):>17.2f}" for st in cols.values()))
    return "\n".join(out)


def plan_table(cfg: ExperimentConfig, scores_csv: Optional[str] = None) -> str:
    out = []
    for seed in cfg.seeds:
        topo = build_topology(cfg, seed)
        for strat in centrality.STRATEGIES:
            ids = centrality.select_nodes(topo, strat, cfg.attack.k, seed=seed)
            out.append(f"seed={seed} strategy={strat} k={cfg.attack.k} nodes={ids}")
        if scores_csv:
            _write_scores(topo, Path(scores_csv).with_name(f"{Path(scores_csv).stem}_seed{seed}.csv"))
    return "\n".join(out)


def _write_scores(topo: graphgen.Topology, path: Path) -> None:
    cols = {k: centrality.scores(topo, k) for k in ("max_degree", "max_ens", "max_pagerank", "max_clustering")}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "degree", "ens", "pagerank", "clustering"])
        for v in range(topo.n):
            w.writerow([v] + [repr(cols[k][v]) for k in cols])


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="p2pbackdoor", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every seed of a config and write CSV artifacts")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--data-dir", help=f"dataset directory (default: ${DATA_DIR_ENV})")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--rounds", type=int, help="override training.rounds")
    r.add_argument("--seed", type=int, help="run only this seed")

    a = sub.add_parser("aggregate", help="recompute aggregate.csv from raw CSVs")
    a.add_argument("run_dir")

    rep = sub.add_parser("report", help="print the final-round summary of a run directory")
    rep.add_argument("run_dir")

    g = sub.add_parser("graph-stats", help="print topology statistics for the config's graph size")
    g.add_argument("config")
    g.add_argument("--seed", type=int)

    pl = sub.add_parser("plan", help="print the adversary ids each strategy selects")
    pl.add_argument("config")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--scores", help="also write per-node centrality scores to this CSV path")
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "rounds", None) is not None:
        changes["training.rounds"] = args.rounds
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    return cfg.replace(**changes) if changes else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.threads < 1:
                raise ConfigError("--threads: must be >= 1")
            cfg = _apply_overrides(parse_config(args.config), args)
            run_dir = run(cfg, args.output_dir, args.data_dir or os.environ.get(DATA_DIR_ENV), args.threads)
            print(summarize(run_dir))
        elif args.command == "aggregate":
            aggregate_run(Path(args.run_dir))
            print(summarize(Path(args.run_dir)))
        elif args.command == "report":
            print(summarize(Path(args.run_dir)))
        elif args.command == "graph-stats":
            cfg = _apply_overrides(parse_config(args.config), args)
            print(stats_table(cfg, cfg.graph.seed if cfg.graph.seed is not None else cfg.seeds[0]))
        elif args.command == "plan":
            cfg = _apply_overrides(parse_config(args.config), args)
            print(plan_table(cfg, args.scores))
    except (ConfigError, ArtifactError, graphgen.GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
