"""Experiment configuration: a JSON document with a fixed, fail-closed schema.

Unknown keys are rejected, omitted keys take the defaults below, and the
fully resolved config (defaults included) is what gets echoed into the run
manifest.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import graphgen
from .centrality import STRATEGIES
from .data import NUM_CLASSES
from .defense import KINDS, AggregatorSpec


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    name: str = "synthetic"
    path: Optional[str] = None
    samples_per_node: Optional[int] = 100
    test_size: Optional[int] = 2000
    synthetic_seed: int = 0
    prototype_seed: int = 0
    jitter: float = 1.0


@dataclass
class GraphConfig:
    family: str = "watts_strogatz"
    n: int = 60
    params: Optional[Dict[str, Any]] = None
    seed: Optional[int] = None  # None: follow the run seed


@dataclass
class TriggerConfig:
    size: int = 3
    position: str = "bottom_right"
    value: float = 1.0


@dataclass
class AttackConfig:
    k: int = 0
    strategy: str = "max_pagerank"
    pdr: float = 0.5
    boost: float = 10.0
    adv_epochs: int = 5
    target_class: int = 2
    trigger: TriggerConfig = field(default_factory=TriggerConfig)


@dataclass
class DefenseConfig:
    kind: str = "mean"
    clip_norm: Optional[float] = None
    trim: Optional[int] = None
    peer_norm: Optional[float] = None
    local_norm: Optional[float] = None


@dataclass
class FaultConfig:
    r: int = 0
    symmetric: bool = False


@dataclass
class TrainingConfig:
    rounds: int = 70
    learning_rate: float = 0.05
    batch_size: int = 32
    local_epochs: int = 1
    weight_decay: float = 0.0
    hidden_dim: int = 64
    eval_every: int = 5
    exchange: str = "model"


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    faults: FaultConfig = field(default_factory=FaultConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    output_dir: str = "runs"

    def resolved_graph_params(self) -> Dict[str, Any]:
        if self.graph.params is not None:
            return dict(self.graph.params)
        return graphgen.default_params(self.graph.family, self.graph.n)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["graph"]["params"] = self.resolved_graph_params()
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"attack.k": 3})``."""
        d = dataclasses.asdict(self)
        for key, value in changes.items():
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"{key}: unknown field")
            node[leaf] = value
        return from_dict(d)


# ------------------------------------------------------------------ parsing

def _check_type(value, hint, where: str):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_type(value, args[0], where)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, where)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        (item,) = typing.get_args(hint)
        return [_check_type(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object, got {type(value).__name__}")
        return dict(value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {hint}")


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where + '.' if where else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _check_type(data[name], hints[name], f"{where + '.' if where else ''}{name}")
    return cls(**kwargs)


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    g, a, t, ds = cfg.graph, cfg.attack, cfg.training, cfg.dataset
    _require(g.family in graphgen.FAMILIES, "graph.family", f"must be one of {graphgen.FAMILIES}, got {g.family!r}")
    _require(g.n >= 3, "graph.n", f"must be >= 3, got {g.n}")
    try:
        graphgen.validate_params(g.family, g.n, cfg.resolved_graph_params())
    except graphgen.GraphError as exc:
        raise ConfigError(f"graph.params: {exc}") from None
    _require(0 <= a.k <= g.n, "attack.k", f"must satisfy 0 <= k <= graph.n ({g.n}), got {a.k}")
    _require(a.strategy in STRATEGIES, "attack.strategy", f"must be one of {STRATEGIES}, got {a.strategy!r}")
    _require(0.0 <= a.pdr <= 1.0, "attack.pdr", f"must be in [0, 1], got {a.pdr}")
    _require(a.boost > 0, "attack.boost", f"must be positive, got {a.boost}")
    _require(a.adv_epochs >= 1, "attack.adv_epochs", f"must be >= 1, got {a.adv_epochs}")
    _require(0 <= a.target_class < NUM_CLASSES, "attack.target_class",
             f"must be in [0, {NUM_CLASSES}), got {a.target_class}")
    _require(a.trigger.size >= 1, "attack.trigger.size", "must be >= 1")
    _require(0.0 <= a.trigger.value <= 1.0, "attack.trigger.value", "must be in [0, 1]")
    _require(a.trigger.position in ("bottom_right", "bottom_left", "top_right", "top_left"),
             "attack.trigger.position", f"unknown position {a.trigger.position!r}")
    _require(cfg.defense.kind in KINDS, "defense.kind", f"must be one of {KINDS}, got {cfg.defense.kind!r}")
    try:
        aggregator_spec(cfg)
    except ValueError as exc:
        raise ConfigError(f"defense: {exc}") from None
    _require(cfg.faults.r >= 0, "faults.r", f"must be >= 0, got {cfg.faults.r}")
    _require(t.rounds >= 1, "training.rounds", f"must be >= 1, got {t.rounds}")
    _require(t.learning_rate > 0, "training.learning_rate", f"must be positive, got {t.learning_rate}")
    _require(t.batch_size >= 1, "training.batch_size", "must be >= 1")
    _require(t.local_epochs >= 1, "training.local_epochs", "must be >= 1")
    _require(t.weight_decay >= 0, "training.weight_decay", "must be >= 0")
    _require(t.hidden_dim >= 1, "training.hidden_dim", "must be >= 1")
    _require(t.eval_every >= 1, "training.eval_every", "must be >= 1")
    _require(t.exchange in ("model", "delta"), "training.exchange", f"must be 'model' or 'delta', got {t.exchange!r}")
    _require(len(cfg.seeds) > 0, "seeds", "must be non-empty")
    _require(len(set(cfg.seeds)) == len(cfg.seeds), "seeds", "must be distinct")
    _require(ds.name in ("synthetic", "emnist_digits", "fashion_mnist", "mnist"), "dataset.name",
             f"unknown dataset {ds.name!r}")
    _require(ds.samples_per_node is None or ds.samples_per_node >= 1, "dataset.samples_per_node", "must be >= 1")
    if ds.name == "synthetic":
        _require(ds.samples_per_node is not None, "dataset.samples_per_node", "required for the synthetic dataset")
        _require(ds.test_size is not None, "dataset.test_size", "required for the synthetic dataset")
    _require(ds.test_size is None or ds.test_size >= 2, "dataset.test_size", "must be >= 2")
    _require(ds.jitter >= 0, "dataset.jitter", "must be >= 0")
    return cfg


def aggregator_spec(cfg: ExperimentConfig) -> AggregatorSpec:
    d = cfg.defense
    return AggregatorSpec(kind=d.kind, clip_norm=d.clip_norm, trim=d.trim,
                          peer_norm=d.peer_norm, local_norm=d.local_norm)


def from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data, ""))


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def reference_config(**overrides) -> ExperimentConfig:
    """WS(60,12), k=3 PageRank, PDR 0.5, boost 10, 70 rounds, seeds 0-2."""
    cfg = ExperimentConfig(name="reference", attack=AttackConfig(k=3))
    return cfg.replace(**overrides) if overrides else validate(cfg)
