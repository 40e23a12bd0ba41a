"""Experiment configuration: nested dataclasses loaded from TOML."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError

STRATEGY_PARAMS = {
    "naive": {},
    "cumulative": {},
    "replay": {"mem_size": 200, "buffer_policy": "reservoir"},
    "ewc": {"lam": 10000.0, "fisher_batches": 10},
    "lwf": {"alpha": 1.0, "temperature": 2.0},
}
BENCHMARK_KINDS = ("split_synthetic", "split_mnist", "instance_incremental")
LOGGER_KINDS = ("text", "csv", "jsonl")


@dataclass
class BenchmarkConfig:
    kind: str = "split_synthetic"
    n_experiences: int = 5
    # synthetic blobs
    n_classes: int = 10
    n_per_class: int = 100
    n_test_per_class: int = 50
    dim: int = 16
    spread: float = 0.5
    # mnist
    data_dir: str = "data/mnist"
    # instance_incremental draws from "synthetic" blobs or "mnist"
    source: str = "synthetic"
    task_labels: bool = False
    fixed_class_order: list[int] | None = None
    shuffle_classes: bool = False


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [32])
    head: str = "incremental"
    masking: bool = True


@dataclass
class StrategyConfig:
    name: str = "naive"
    params: dict = field(default_factory=dict)


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    eval_batch_size: int | None = None
    # "full" test stream after each experience, or only the experiences seen so far
    eval_scope: str | None = None


@dataclass
class MetricsConfig:
    granularities: list[str] = field(default_factory=lambda: ["epoch", "experience", "stream"])
    timing: bool = False


@dataclass
class CheckpointConfig:
    path: str | None = None
    save_every_exp: bool = False


@dataclass
class ExperimentConfig:
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    checkpoint: CheckpointConfig = field(default_factory=CheckpointConfig)
    seed: int = 0
    output_dir: str = "runs/default"
    loggers: list[str] = field(default_factory=lambda: ["csv", "jsonl", "text"])

    @property
    def checkpoint_path(self) -> Path:
        if self.checkpoint.path:
            return Path(self.checkpoint.path)
        return Path(self.output_dir) / "checkpoint.clckpt"

    @property
    def eval_scope(self) -> str:
        if self.train.eval_scope is not None:
            return self.train.eval_scope
        return "seen" if self.model.head == "multihead" else "full"

    def strategy_params(self) -> dict:
        out = dict(STRATEGY_PARAMS[self.strategy.name])
        out.update(self.strategy.params)
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 over everything that affects results (paths excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("checkpoint")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {
    "benchmark": BenchmarkConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "metrics": MetricsConfig,
    "checkpoint": CheckpointConfig,
}


def _fill(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(where + '.' + k for k in unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kw[name] = _fill(cls, data.pop(name), name)
    if "strategy" in data:
        s = dict(data.pop("strategy"))
        if not isinstance(s, dict) or "name" not in s:
            raise ConfigError("strategy: missing key strategy.name")
        name = s.pop("name")
        kw["strategy"] = StrategyConfig(name=name, params=s)
    top = {"seed", "output_dir", "loggers"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kw.update(data)
    cfg = ExperimentConfig(**kw)
    try:
        validate(cfg)
    except TypeError as e:
        raise ConfigError(f"ill-typed value: {e}") from e
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    b = cfg.benchmark
    if b.kind not in BENCHMARK_KINDS:
        raise ConfigError(f"benchmark.kind: unknown benchmark {b.kind!r}; expected one of {list(BENCHMARK_KINDS)}")
    if b.source not in ("synthetic", "mnist"):
        raise ConfigError(f"benchmark.source: expected 'synthetic' or 'mnist', got {b.source!r}")
    if cfg.model.head not in ("incremental", "multihead"):
        raise ConfigError(f"model.head: expected 'incremental' or 'multihead', got {cfg.model.head!r}")
    if any(int(h) < 1 for h in cfg.model.hidden):
        raise ConfigError("model.hidden: sizes must be >= 1")
    name = cfg.strategy.name
    if name not in STRATEGY_PARAMS:
        raise ConfigError(f"strategy.name: unknown strategy {name!r}; expected one of {sorted(STRATEGY_PARAMS)}")
    unknown = sorted(set(cfg.strategy.params) - set(STRATEGY_PARAMS[name]))
    if unknown:
        raise ConfigError(f"strategy: unknown key(s) {', '.join('strategy.' + k for k in unknown)} for {name!r}")
    if cfg.train.eval_scope not in (None, "full", "seen"):
        raise ConfigError(f"train.eval_scope: expected 'full' or 'seen', got {cfg.train.eval_scope!r}")
    if cfg.model.head == "multihead" and b.task_labels and cfg.eval_scope == "full":
        raise ConfigError("train.eval_scope: a multi-head model cannot be evaluated on tasks it has not seen")
    bad = sorted(set(cfg.loggers) - set(LOGGER_KINDS))
    if bad:
        raise ConfigError(f"loggers: unknown logger(s) {bad}; expected a subset of {list(LOGGER_KINDS)}")
    bad = sorted(set(cfg.metrics.granularities) - {"minibatch", "epoch", "experience", "stream"})
    if bad:
        raise ConfigError(f"metrics.granularities: unknown granularity {bad}")
    if cfg.train.lr <= 0 or cfg.train.epochs < 0 or cfg.train.batch_size < 1:
        raise ConfigError("train: lr must be > 0, epochs >= 0, batch_size >= 1")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return config_from_dict(data)
