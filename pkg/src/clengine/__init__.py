"""Continual-learning experimentation engine on a small dense-network core."""

from .benchmarks import (
    Benchmark,
    Experience,
    Stream,
    class_incremental,
    gaussian_blobs,
    instance_incremental,
    load_idx,
    split_mnist,
    split_synthetic,
)
from .buffers import ClassBalancedBuffer, ExperienceBalancedBuffer, ReservoirBuffer, make_buffer
from .config import ExperimentConfig, load_config
from .data import Batch, Dataset, TransformSpec, balanced_joint_loader, batches, concat, subsample
from .evaluation import EvaluationPlugin
from .metrics import AccuracyMatrix, bwt, forgetting
from .models import IncrementalClassifier, Model, MultiHeadClassifier
from .runner import run_experiment
from .training import (
    Plugin,
    Strategy,
    TrainHParams,
    make_cumulative,
    make_ewc,
    make_lwf,
    make_naive,
    make_replay,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "Batch",
    "Benchmark",
    "ClassBalancedBuffer",
    "Dataset",
    "EvaluationPlugin",
    "Experience",
    "ExperienceBalancedBuffer",
    "ExperimentConfig",
    "IncrementalClassifier",
    "Model",
    "MultiHeadClassifier",
    "Plugin",
    "ReservoirBuffer",
    "Strategy",
    "Stream",
    "TrainHParams",
    "TransformSpec",
    "balanced_joint_loader",
    "batches",
    "bwt",
    "class_incremental",
    "concat",
    "forgetting",
    "gaussian_blobs",
    "instance_incremental",
    "load_config",
    "load_idx",
    "make_buffer",
    "make_cumulative",
    "make_ewc",
    "make_lwf",
    "make_naive",
    "make_replay",
    "run_experiment",
    "split_mnist",
    "split_synthetic",
    "subsample",
]
