"""Ready-made strategies: the base template with a fixed plugin list."""
from __future__ import annotations

from typing import Sequence

from ..buffers import make_buffer
from ..errors import InvalidArgument
from ..models import Model
from ..rng import RngStreams
from .plugins import CumulativePlugin, EWCPlugin, LwFPlugin, ReplayPlugin
from .template import Plugin, Strategy, TrainHParams


def _build(model, hparams, plugins, evaluator, rng, extra) -> Strategy:
    return Strategy(model, hparams, list(plugins) + list(extra), evaluator, rng)


def make_naive(model: Model, hparams: TrainHParams, evaluator=None, rng=0, extra: Sequence[Plugin] = ()):
    return _build(model, hparams, [], evaluator, rng, extra)


def make_cumulative(model, hparams, evaluator=None, rng=0, extra=()):
    return _build(model, hparams, [CumulativePlugin()], evaluator, rng, extra)


def make_replay(
    model,
    hparams,
    buffer_policy: str = "reservoir",
    mem_size: int = 200,
    evaluator=None,
    rng=0,
    extra=(),
):
    if mem_size < 1:
        raise InvalidArgument(f"mem_size must be >= 1, got {mem_size}")
    if hparams.batch_size < 2:
        raise InvalidArgument("replay needs batch_size >= 2 to fit both data sources")
    rng = rng if isinstance(rng, RngStreams) else RngStreams(rng)
    buffer = make_buffer(buffer_policy, mem_size, rng.seed_for("reservoir"))
    return _build(model, hparams, [ReplayPlugin(buffer)], evaluator, rng, extra)


def make_ewc(model, hparams, lam: float = 1.0, fisher_batches: int = 10, evaluator=None, rng=0, extra=()):
    return _build(model, hparams, [EWCPlugin(lam, fisher_batches)], evaluator, rng, extra)


def make_lwf(model, hparams, alpha: float = 1.0, temperature: float = 2.0, evaluator=None, rng=0, extra=()):
    return _build(model, hparams, [LwFPlugin(alpha, temperature)], evaluator, rng, extra)


STRATEGIES = {
    "naive": make_naive,
    "cumulative": make_cumulative,
    "replay": make_replay,
    "ewc": make_ewc,
    "lwf": make_lwf,
}
