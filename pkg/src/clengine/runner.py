"""Build an experiment from its config, run it, checkpoint and resume it."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import benchmarks as bm
from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .errors import CheckpointMismatch, StateError
from .evaluation import EvaluationPlugin
from .grad import init_network
from .loggers import CSVLogger, JSONLLogger, TextLogger
from .metrics import AccuracyMatrix, bwt, forgetting
from .models import IncrementalClassifier, Model, MultiHeadClassifier
from .rng import RngStreams
from .training import STRATEGIES, Strategy, TrainHParams

LOG_FILES = {"csv": "metrics.csv", "jsonl": "metrics.jsonl", "text": "log.txt"}
_LOGGER_CLASSES = {"csv": CSVLogger, "jsonl": JSONLLogger, "text": TextLogger}


@dataclass
class RunResult:
    matrix: AccuracyMatrix
    next_experience: int
    n_experiences: int
    output_dir: Path

    @property
    def finished(self) -> bool:
        return self.next_experience >= self.n_experiences


def build_benchmark(cfg: ExperimentConfig, streams: RngStreams) -> bm.Benchmark:
    b = cfg.benchmark
    order_seed = streams.seed_for("class_order") if b.shuffle_classes else None
    if b.kind == "split_synthetic":
        return bm.split_synthetic(
            n_classes=b.n_classes,
            n_experiences=b.n_experiences,
            n_per_class=b.n_per_class,
            dim=b.dim,
            spread=b.spread,
            seed=streams.seed_for("blobs"),
            n_test_per_class=b.n_test_per_class,
            class_order_seed=order_seed,
            fixed_class_order=b.fixed_class_order,
            task_labels=b.task_labels,
        )
    if b.kind == "split_mnist":
        return bm.split_mnist(
            n_experiences=b.n_experiences,
            data_dir=b.data_dir,
            seed=order_seed,
            fixed_class_order=b.fixed_class_order,
            task_labels=b.task_labels,
        )
    # instance_incremental
    if b.source == "mnist":
        d = Path(b.data_dir)
        train = bm.load_idx(bm._find(d, bm.MNIST_FILES["train_images"]), bm._find(d, bm.MNIST_FILES["train_labels"]))
        test = bm.load_idx(bm._find(d, bm.MNIST_FILES["test_images"]), bm._find(d, bm.MNIST_FILES["test_labels"]))
    else:
        split = bm.split_synthetic(
            n_classes=b.n_classes,
            n_experiences=1,
            n_per_class=b.n_per_class,
            dim=b.dim,
            spread=b.spread,
            seed=streams.seed_for("blobs"),
            n_test_per_class=b.n_test_per_class,
        )
        train, test = split.train_stream[0].dataset, split.test_stream[0].dataset
    return bm.instance_incremental(train, test, b.n_experiences, seed=streams.seed_for("instance_split"))


def build_model(cfg: ExperimentConfig, streams: RngStreams, input_dim: int) -> Model:
    hidden = [int(h) for h in cfg.model.hidden]
    trunk = None
    if hidden:
        trunk = init_network([input_dim] + hidden, streams.seed_for("init"), final_activation="relu")
    feat = hidden[-1] if hidden else input_dim
    if cfg.model.head == "multihead":
        head = MultiHeadClassifier(feat, streams.seed_for("head"), cfg.model.masking)
    else:
        head = IncrementalClassifier(feat, streams.seed_for("head"), cfg.model.masking)
    return Model(trunk, head)


def build_strategy(cfg: ExperimentConfig, model: Model, evaluator, streams: RngStreams) -> Strategy:
    hp = TrainHParams(cfg.train.lr, cfg.train.epochs, cfg.train.batch_size, cfg.train.eval_batch_size)
    factory = STRATEGIES[cfg.strategy.name]
    return factory(model, hp, evaluator=evaluator, rng=streams, **cfg.strategy_params())


def open_loggers(cfg: ExperimentConfig, offsets: dict | None = None):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    loggers = []
    for kind in cfg.loggers:
        off = None if offsets is None else offsets.get(kind)
        if offsets is not None and off is None:
            raise CheckpointMismatch(f"checkpoint has no offset for the {kind!r} logger")
        loggers.append(_LOGGER_CLASSES[kind](out / LOG_FILES[kind], off))
    return loggers


def summarize(matrix: AccuracyMatrix, trained: int) -> dict:
    out = {"accuracy_matrix": matrix.state_dict(), "forgetting": {}, "bwt": None}
    for i in range(trained):
        try:
            out["forgetting"][str(i)] = forgetting(matrix, i, trained - 1)
        except StateError:
            pass
    try:
        out["bwt"] = bwt(matrix, trained)
    except StateError:
        pass
    return out


def run_experiment(cfg: ExperimentConfig, resume=None, stop_after: int | None = None) -> RunResult:
    """Run (or resume) an experiment.

    ``stop_after`` ends the process-level run once that many experiences
    have been trained in total, as if interrupted at a quiescent point.
    """
    streams = RngStreams(cfg.seed)
    bench = build_benchmark(cfg, streams)
    input_dim = bench.train_stream[0].dataset.dim
    ckpt = None
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.get("config_digest") != cfg.digest():
            raise CheckpointMismatch(f"checkpoint {resume} was written by a different configuration")
    loggers = open_loggers(cfg, None if ckpt is None else ckpt["logger_offsets"])
    try:
        evaluator = EvaluationPlugin(
            loggers,
            granularities=cfg.metrics.granularities,
            timing=cfg.metrics.timing,
        )
        model = build_model(cfg, streams, input_dim)
        strategy = build_strategy(cfg, model, evaluator, streams)
        start = 0
        if ckpt is not None:
            strategy.load_state_dict(ckpt["strategy"])
            start = int(ckpt["next_experience"])
        save = cfg.checkpoint.save_every_exp or stop_after is not None
        n = bench.n_experiences
        k = start
        for k in range(start, n):
            if stop_after is not None and k >= stop_after:
                break
            strategy.train(bench.train_stream[k])
            scope = bench.test_stream if cfg.eval_scope == "full" else bench.test_stream[: k + 1]
            strategy.eval(scope)
            if save:
                save_checkpoint(cfg.checkpoint_path, checkpoint_state(cfg, strategy, loggers, k + 1))
        else:
            k = n
        if k >= n:
            summary = summarize(evaluator.matrix, strategy.clock.train_exp_counter)
            (Path(cfg.output_dir) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return RunResult(evaluator.matrix, k, n, Path(cfg.output_dir))
    finally:
        for lg in loggers:
            lg.close()


def checkpoint_state(cfg: ExperimentConfig, strategy: Strategy, loggers, next_experience: int) -> dict:
    offsets = {}
    for kind, lg in zip(cfg.loggers, loggers):
        offsets[kind] = lg.tell()
    return {
        "format_version": FORMAT_VERSION,
        "config_digest": cfg.digest(),
        "next_experience": next_experience,
        "strategy": strategy.state_dict(),
        "logger_offsets": offsets,
    }


def inspect_checkpoint(path) -> dict:
    ck = load_checkpoint(path)
    m = AccuracyMatrix()
    m.load_state_dict(ck["strategy"]["evaluator"].get("matrix", []))
    return {
        "format_version": ck["format_version"],
        "config_digest": ck["config_digest"],
        "next_experience": ck["next_experience"],
        "train_iterations": ck["strategy"]["clock"]["train_iterations"],
        "matrix": m,
    }

