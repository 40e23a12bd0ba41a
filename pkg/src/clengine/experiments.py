"""In-memory experiment sweeps used by the scripts and the acceptance suite.

Nothing here writes files: each run builds its benchmark, model and
strategy from an :class:`ExperimentConfig` and returns the accuracy matrix.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, validate
from .evaluation import EvaluationPlugin
from .metrics import AccuracyMatrix
from .rng import RngStreams
from .runner import build_benchmark, build_model, build_strategy

STRATEGY_NAMES = ("naive", "cumulative", "replay", "ewc", "lwf")


def reference_config(strategy: str = "naive", seed: int = 0, **params) -> ExperimentConfig:
    """The reference forgetting benchmark: 10 blob classes in 5 experiences, MLP [16, 32, head]."""
    cfg = ExperimentConfig(seed=seed, loggers=[])
    cfg.benchmark.kind = "split_synthetic"
    cfg.benchmark.n_classes = 10
    cfg.benchmark.n_experiences = 5
    cfg.benchmark.dim = 16
    cfg.benchmark.spread = 0.5
    cfg.model.hidden = [32]
    cfg.train.lr = 0.05
    cfg.train.epochs = 20
    cfg.train.batch_size = 32
    cfg.strategy.name = strategy
    cfg.strategy.params = dict(params)
    validate(cfg)
    return cfg


@dataclass
class RunSummary:
    matrix: AccuracyMatrix
    final_stream_accuracy: float
    diverged: bool = False

    def retention(self, i: int = 0) -> float:
        """Accuracy on experience ``i`` after the last training experience."""
        last = max(k for k, _ in self.matrix.entries)
        return self.matrix[(last, i)]


def run_in_memory(cfg: ExperimentConfig) -> RunSummary:
    """Train on every experience, evaluating the configured scope after each."""
    streams = RngStreams(cfg.seed)
    bench = build_benchmark(cfg, streams)
    ep = EvaluationPlugin([], granularities=("experience", "stream"))
    model = build_model(cfg, streams, bench.train_stream[0].dataset.dim)
    strategy = build_strategy(cfg, model, ep, streams)
    try:
        for k, exp in enumerate(bench.train_stream):
            strategy.train(exp)
            scope = bench.test_stream if cfg.eval_scope == "full" else bench.test_stream[: k + 1]
            strategy.eval(scope)
    except RuntimeError:
        return RunSummary(ep.matrix, float("nan"), diverged=True)
    final = ep.last["Acc_Stream/eval_phase/test_stream/Task000"]
    return RunSummary(ep.matrix, final)


def seed_average(cfg: ExperimentConfig, seeds) -> dict:
    """Mean experience-0 retention and final stream accuracy over ``seeds``."""
    runs = []
    for s in seeds:
        c = copy.deepcopy(cfg)
        c.seed = int(s)
        runs.append(run_in_memory(c))
    if any(r.diverged for r in runs):
        return {"retention_exp0": float("nan"), "final_stream_accuracy": float("nan"), "diverged": True}
    return {
        "retention_exp0": float(np.mean([r.retention(0) for r in runs])),
        "final_stream_accuracy": float(np.mean([r.final_stream_accuracy for r in runs])),
        "diverged": False,
    }


def forgetting_ordering(seeds=range(5), params: dict | None = None) -> dict:
    """Seed-averaged summary for every built-in strategy on the reference benchmark."""
    params = params or {}
    return {name: seed_average(reference_config(name, **params.get(name, {})), seeds) for name in STRATEGY_NAMES}
