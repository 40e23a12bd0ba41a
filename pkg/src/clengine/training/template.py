"""The supervised SGD template: training/eval loops with plugin callbacks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..benchmarks import Experience, Stream
from ..data import Batch, Dataset, batches, with_transform_group
from ..errors import InvalidArgument, StateError
from ..grad import MASK_VALUE, SGD, softmax_cross_entropy
from ..models import Model
from ..rng import RngStreams

TRAIN_CALLBACKS = (
    "before_training",
    "before_training_exp",
    "after_dataset_adaptation",
    "before_training_epoch",
    "before_training_iteration",
    "before_forward",
    "after_forward",
    "before_backward",
    "after_backward",
    "after_training_iteration",
    "after_update",
    "after_training_epoch",
    "after_training_exp",
    "after_training",
)
EVAL_CALLBACKS = (
    "before_eval",
    "before_eval_exp",
    "before_eval_iteration",
    "after_eval_iteration",
    "after_eval_exp",
    "after_eval",
)
CALLBACKS = TRAIN_CALLBACKS + EVAL_CALLBACKS


class Plugin:
    """Callback bundle. Every handler receives the :class:`StrategyState`."""

    name = "plugin"

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, state: dict) -> None:
        pass


for _cb in CALLBACKS:
    setattr(Plugin, _cb, lambda self, state: None)
del _cb


@dataclass
class TrainHParams:
    lr: float = 0.05
    epochs: int = 1
    batch_size: int = 32
    eval_batch_size: int | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidArgument(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise InvalidArgument(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class Clock:
    train_iterations: int = 0
    train_exp_epochs: int = 0
    train_exp_counter: int = 0
    eval_iterations: int = 0

    def state_dict(self) -> dict:
        return dict(self.__dict__)

    def load_state_dict(self, state: dict) -> None:
        for k, v in state.items():
            setattr(self, k, int(v))


@dataclass
class StrategyState:
    """Mutable loop state shared with plugins.

    Plugins adding loss terms at ``before_backward`` add the value to
    ``loss`` and either add a logit-space gradient to ``dlogits`` or
    accumulate a parameter-space gradient directly into ``Parameter.grad``.
    """

    model: Model
    optimizer: SGD
    hparams: TrainHParams
    rng: RngStreams
    clock: Clock = field(default_factory=Clock)
    experience: Experience | None = None
    adapted_dataset: Dataset | None = None
    dataloader: Iterable[Batch] | None = None
    # (state, seed) -> batches; replaces the default shuffled loader when set
    dataloader_factory: Callable[["StrategyState", int], Iterable[Batch]] | None = None
    mbatch: Batch | None = None
    mb_logits: np.ndarray | None = None
    loss: float = 0.0
    dlogits: np.ndarray | None = None
    is_training: bool = False
    eval_stream_name: str | None = None


def pad_logits(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Widen ``logits`` with masked columns so every target is a valid column."""
    need = int(targets.max()) + 1 if targets.size else 0
    if need <= logits.shape[1]:
        return logits
    pad = np.full((logits.shape[0], need - logits.shape[1]), MASK_VALUE)
    return np.concatenate([logits, pad], axis=1)


class Strategy:
    """Base SGD template plus an ordered plugin list.

    The evaluation plugin, when given, is always dispatched after all
    other plugins so it observes their final effect on loss and logits.
    """

    def __init__(
        self,
        model: Model,
        hparams: TrainHParams,
        plugins: Sequence[Plugin] = (),
        evaluator: Plugin | None = None,
        rng: RngStreams | int = 0,
    ):
        rng = rng if isinstance(rng, RngStreams) else RngStreams(rng)
        self.plugins = list(plugins)
        self.evaluator = evaluator
        self.state = StrategyState(
            model=model,
            optimizer=SGD(model.parameters(), hparams.lr),
            hparams=hparams,
            rng=rng,
        )

    @property
    def model(self) -> Model:
        return self.state.model

    @property
    def clock(self) -> Clock:
        return self.state.clock

    def all_plugins(self) -> list[Plugin]:
        return self.plugins + ([self.evaluator] if self.evaluator is not None else [])

    def _dispatch(self, point: str) -> None:
        for p in self.all_plugins():
            getattr(p, point)(self.state)

    def train(self, experiences) -> None:
        if isinstance(experiences, Experience):
            experiences = [experiences]
        self.state.is_training = True
        self._dispatch("before_training")
        for exp in experiences:
            self.train_experience(exp)
        self._dispatch("after_training")
        self.state.is_training = False

    def _next_seed(self) -> int:
        return int(self.state.rng.get("shuffle").integers(0, 2**63 - 1))

    def train_experience(self, exp: Experience) -> None:
        s = self.state
        s.is_training = True
        s.experience = exp
        s.dataloader_factory = None
        s.dataloader = None
        s.clock.train_exp_epochs = 0
        self._dispatch("before_training_exp")

        s.model.adapt(exp)
        s.optimizer.set_parameters(s.model.parameters())
        s.adapted_dataset = with_transform_group(exp.dataset, "train")
        self._dispatch("after_dataset_adaptation")

        for _ in range(s.hparams.epochs):
            self._dispatch("before_training_epoch")
            seed = self._next_seed()
            if s.dataloader_factory is not None:
                s.dataloader = s.dataloader_factory(s, seed)
            else:
                s.dataloader = batches(s.adapted_dataset, s.hparams.batch_size, shuffle=True, seed=seed)
            for mb in s.dataloader:
                self._training_iteration(mb)
            s.clock.train_exp_epochs += 1
            self._dispatch("after_training_epoch")

        self._dispatch("after_training_exp")
        s.clock.train_exp_counter += 1

    def _training_iteration(self, mb: Batch) -> None:
        s = self.state
        s.mbatch = mb
        self._dispatch("before_training_iteration")
        s.optimizer.zero_grad()
        self._dispatch("before_forward")
        s.mb_logits = s.model(mb, keep_cache=True)
        self._dispatch("after_forward")
        s.loss, s.dlogits = softmax_cross_entropy(s.mb_logits, mb.y)
        self._dispatch("before_backward")
        if not np.isfinite(s.loss) or abs(s.loss) >= 1e20:
            raise RuntimeError(
                f"non-finite loss {s.loss!r} at training iteration {s.clock.train_iterations} "
                f"(experience {s.experience.index})"
            )
        s.model.backward(s.dlogits)
        self._dispatch("after_backward")
        s.optimizer.step()
        s.clock.train_iterations += 1
        self._dispatch("after_training_iteration")
        self._dispatch("after_update")

    def eval(self, stream: Stream | Sequence[Experience]) -> list:
        s = self.state
        was_training = s.is_training
        s.is_training = False
        exps = list(stream)
        s.eval_stream_name = stream.name if isinstance(stream, Stream) else (
            exps[0].stream_name if exps else "test"
        )
        bs = s.hparams.eval_batch_size or s.hparams.batch_size
        start = len(getattr(self.evaluator, "history", []))
        self._dispatch("before_eval")
        for exp in exps:
            s.experience = exp
            self._dispatch("before_eval_exp")
            ds = with_transform_group(exp.dataset, "eval")
            for mb in batches(ds, bs, shuffle=False):
                s.mbatch = mb
                self._dispatch("before_eval_iteration")
                s.mb_logits = s.model(mb)
                s.loss, _ = softmax_cross_entropy(pad_logits(s.mb_logits, mb.y), mb.y)
                s.clock.eval_iterations += 1
                self._dispatch("after_eval_iteration")
            self._dispatch("after_eval_exp")
        self._dispatch("after_eval")
        s.is_training = was_training
        return list(getattr(self.evaluator, "history", [])[start:])

    def state_dict(self) -> dict:
        return {
            "clock": self.state.clock.state_dict(),
            "rng": self.state.rng.state_dict(),
            "model": self.state.model.state_dict(),
            "optimizer": self.state.optimizer.param_ids,
            "plugins": [p.state_dict() for p in self.plugins],
            "evaluator": self.evaluator.state_dict() if self.evaluator is not None else {},
        }

    def load_state_dict(self, state: dict) -> None:
        s = self.state
        s.clock.load_state_dict(state["clock"])
        s.rng.load_state_dict(state["rng"])
        s.model.load_state_dict(state["model"])
        s.optimizer.set_parameters(s.model.parameters())
        if s.optimizer.param_ids != list(state["optimizer"]):
            raise StateError("restored model parameters differ from the saved optimizer view")
        if len(state["plugins"]) != len(self.plugins):
            raise StateError("plugin count differs from the saved state")
        for p, ps in zip(self.plugins, state["plugins"]):
            p.load_state_dict(ps)
        if self.evaluator is not None:
            self.evaluator.load_state_dict(state["evaluator"])
