"""Run configuration: parsing, defaults, strict validation, hashing.

Config files are small YAML documents with three blocks (``dataset``,
``search``, ``eval``) plus top-level ``seeds``/``out_dir``. Unknown keys are
rejected by name. Defaults follow the search protocol: 50 epochs, batch 64,
16 initial channels, weight lr 0.025 (SGD) or 0.175 with scheduler beta 0.98
(the stable-rank-driven optimizer).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .evaluation import EvalConfig

MODES = ("search", "evaluate", "probe", "sweep", "plot", "complexity")


@dataclass
class DataConfig:
    kind: str = "synth"  # synth | cifar | patch
    path: str = None
    num_classes: int = 4
    label_mode: str = "single_label"
    resolution: int = 64
    n_per_split: int = 200
    background_uniformity: float = 0.8
    augment: str = "identity"
    search_resolution: int = 64

    def __post_init__(self):
        if self.kind not in ("synth", "cifar", "patch"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind in ("cifar", "patch") and not self.path:
            raise ConfigError(f"dataset kind {self.kind!r} requires a path")


@dataclass
class SearchConfig:
    epochs: int = 50
    batch_size: int = 64
    init_channels: int = 16
    optimizer: str = "sgd"  # sgd | adas
    lr0: float = None  # resolved from optimizer when unset
    adas_beta: float = 0.98
    adas_zeta: float = 1.0
    adas_eta_min: float = 1e-4
    probe_delta: float = 0.01
    cells: object = 8  # int, or list of ints for sweeps
    nodes: object = 4
    stem: str = "tiny"

    def __post_init__(self):
        for opt in self.optimizer_list():
            if opt not in ("sgd", "adas"):
                raise ConfigError(f"unknown optimizer {opt!r}")
        if self.lr0 is None and not isinstance(self.optimizer, (list, tuple)):
            self.lr0 = 0.175 if self.optimizer == "adas" else 0.025
        if not 0.0 <= self.adas_beta < 1.0:
            raise ConfigError("adas_beta must be in [0, 1)")

    def resolved_lr0(self, optimizer: str) -> float:
        """lr for one grid optimizer; explicit lr0 wins only for a scalar match."""
        if self.lr0 is not None and self.optimizer == optimizer:
            return self.lr0
        return 0.175 if optimizer == "adas" else 0.025

    def cells_list(self):
        return list(self.cells) if isinstance(self.cells, (list, tuple)) else [self.cells]

    def nodes_list(self):
        return list(self.nodes) if isinstance(self.nodes, (list, tuple)) else [self.nodes]

    def optimizer_list(self):
        return (list(self.optimizer) if isinstance(self.optimizer, (list, tuple))
                else [self.optimizer])


@dataclass
class EvalBlock(EvalConfig):
    final_runs: int = 3

    def __post_init__(self):
        super().__post_init__()
        if self.final_runs < 1:
            raise ConfigError("final_runs must be at least 1")


@dataclass
class RunConfig:
    dataset: DataConfig = field(default_factory=DataConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    eval: EvalBlock = field(default_factory=EvalBlock)
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    workers: int = 1


def _build(cls, payload: dict, context: str):
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError(f"{context} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - names)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {context}")
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad value in {context}: {exc}") from exc


def from_dict(payload: dict) -> RunConfig:
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError("config document must be a mapping")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(payload) - top)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} at top level")
    cfg = RunConfig(
        dataset=_build(DataConfig, payload.get("dataset"), "dataset"),
        search=_build(SearchConfig, payload.get("search"), "search"),
        eval=_build(EvalBlock, payload.get("eval"), "eval"),
        seeds=list(payload.get("seeds", [0])),
        out_dir=str(payload.get("out_dir", "runs")),
        workers=int(payload.get("workers", 1)),
    )
    if not cfg.seeds:
        raise ConfigError("seeds must list at least one seed")
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(payload)


def config_hash(cfg: RunConfig) -> str:
    """Stable 12-hex digest of the fully resolved configuration."""
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
