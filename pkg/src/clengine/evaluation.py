"""EvaluationPlugin: turns loop events into metric emissions and fans them out."""
from __future__ import annotations

from typing import Iterable, Sequence

from .errors import InvalidArgument, LoggingError
from .metrics import (
    GRANULARITIES,
    AccuracyMatrix,
    MetricValue,
    RunningMean,
    Timer,
    accuracy_update,
    canonical_name,
)
from .training.template import Plugin, StrategyState

DEFAULT_GRANULARITIES = ("epoch", "experience", "stream")


class _Accumulators:
    def __init__(self):
        self.acc = RunningMean()
        self.loss = RunningMean()

    def update(self, logits, targets, loss) -> None:
        accuracy_update(self.acc, logits, targets)
        self.loss.update(loss, len(targets))

    def reset(self) -> None:
        self.acc.reset()
        self.loss.reset()

    def state_dict(self):
        return {"acc": self.acc.state_dict(), "loss": self.loss.state_dict()}

    def load_state_dict(self, state):
        self.acc.load_state_dict(state["acc"])
        self.loss.load_state_dict(state["loss"])


def dispatch(loggers: Sequence, values: Iterable[MetricValue]) -> None:
    """Deliver every value to every logger, value-major, in registration order."""
    for v in values:
        for lg in loggers:
            try:
                lg.log_metric(v)
            except Exception as e:
                raise LoggingError(f"logger {getattr(lg, 'name', type(lg).__name__)!r} failed: {e}") from e


class EvaluationPlugin(Plugin):
    """Accuracy and loss at the requested granularities, plus the accuracy matrix.

    Train-phase experience metrics average over every iteration of every
    epoch of the experience. Eval-phase stream metrics are weighted by
    example count. ``timing`` adds wall-clock seconds per training
    experience, which makes metric files nondeterministic.
    """

    name = "evaluation"

    def __init__(
        self,
        loggers: Sequence = (),
        granularities: Iterable[str] = DEFAULT_GRANULARITIES,
        metrics: Iterable[str] = ("accuracy", "loss"),
        timing: bool = False,
    ):
        self.granularities = tuple(granularities)
        bad = set(self.granularities) - set(GRANULARITIES)
        if bad:
            raise InvalidArgument(f"unknown granularities {sorted(bad)}")
        self.metrics = tuple(metrics)
        bad = set(self.metrics) - {"accuracy", "loss"}
        if bad:
            raise InvalidArgument(f"unknown metrics {sorted(bad)}")
        self.loggers = list(loggers)
        self.timing = timing
        self.matrix = AccuracyMatrix()
        self.history: list[MetricValue] = []
        self.last: dict[str, float] = {}
        self._mb = _Accumulators()
        self._epoch = _Accumulators()
        self._exp = _Accumulators()
        self._stream = _Accumulators()
        self._timer = Timer()

    def _emit(self, state: StrategyState, acc: _Accumulators, granularity: str, phase: str,
              stream: str, task: int, exp: int | None) -> None:
        if granularity not in self.granularities:
            return
        values = []
        for kind in self.metrics:
            v = acc.acc.result() if kind == "accuracy" else acc.loss.result()
            values.append(self._value(state, kind, v, granularity, phase, stream, task, exp))
        self._publish(values)

    def _value(self, state, kind, v, granularity, phase, stream, task, exp) -> MetricValue:
        name = canonical_name(kind, phase, stream, task, exp, granularity)
        return MetricValue(
            name=name,
            value=float(v),
            x_axis=state.clock.train_iterations,
            granularity=granularity,
            phase=phase,
            stream_name=stream,
            task_label=int(task),
            experience_index=None if granularity == "stream" else int(exp),
        )

    def _publish(self, values: list[MetricValue]) -> None:
        self.history.extend(values)
        for v in values:
            self.last[v.name] = v.value
        dispatch(self.loggers, values)

    # training phase
    def before_training_exp(self, state):
        self._exp.reset()
        if self.timing:
            self._timer.start()

    def before_training_epoch(self, state):
        self._epoch.reset()

    def after_training_iteration(self, state):
        mb = state.mbatch
        for acc in (self._mb, self._epoch, self._exp):
            acc.update(state.mb_logits, mb.y, state.loss)
        exp = state.experience
        self._emit(state, self._mb, "minibatch", "train", exp.stream_name, exp.task_label, exp.index)
        self._mb.reset()

    def after_training_epoch(self, state):
        exp = state.experience
        self._emit(state, self._epoch, "epoch", "train", exp.stream_name, exp.task_label, exp.index)
        self._epoch.reset()

    def after_training_exp(self, state):
        exp = state.experience
        self._emit(state, self._exp, "experience", "train", exp.stream_name, exp.task_label, exp.index)
        self._exp.reset()
        if self.timing:
            secs = self._timer.stop()
            self._publish(
                [self._value(state, "time", secs, "experience", "train", exp.stream_name, exp.task_label, exp.index)]
            )
        summary = {"experience": exp.index, "iterations": state.clock.train_iterations}
        for lg in self.loggers:
            lg.on_training_exp_end(summary)

    # eval phase
    def before_eval(self, state):
        self._stream.reset()

    def before_eval_exp(self, state):
        self._exp.reset()

    def after_eval_iteration(self, state):
        mb = state.mbatch
        self._exp.update(state.mb_logits, mb.y, state.loss)
        self._stream.update(state.mb_logits, mb.y, state.loss)

    def after_eval_exp(self, state):
        exp = state.experience
        trained = state.clock.train_exp_counter
        if trained > 0 and self._exp.acc.weight:
            self.matrix.record(trained - 1, exp.index, self._exp.acc.result())
        self._emit(state, self._exp, "experience", "eval", exp.stream_name, exp.task_label, exp.index)
        self._exp.reset()

    def after_eval(self, state):
        stream = state.eval_stream_name or "test"
        self._emit(state, self._stream, "stream", "eval", stream, 0, None)
        summary = {
            "stream": stream,
            "accuracy": self._stream.acc.result(),
            "trained_experiences": state.clock.train_exp_counter,
        }
        self._stream.reset()
        for lg in self.loggers:
            lg.on_eval_end(summary)

    def state_dict(self) -> dict:
        return {
            "matrix": self.matrix.state_dict(),
            "last": dict(self.last),
            "accumulators": {
                k: getattr(self, f"_{k}").state_dict() for k in ("mb", "epoch", "exp", "stream")
            },
        }

    def load_state_dict(self, state: dict) -> None:
        self.matrix.load_state_dict(state["matrix"])
        self.last = dict(state["last"])
        for k, v in state["accumulators"].items():
            getattr(self, f"_{k}").load_state_dict(v)
