"""Metric primitives: running means, accuracy, the accuracy matrix, timers."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ShapeError, StateError

GRANULARITIES = ("minibatch", "epoch", "experience", "stream")
_GRAN_TAG = {"minibatch": "MB", "epoch": "Epoch", "experience": "Exp", "stream": "Stream"}
_KIND_TAG = {"accuracy": "Acc", "loss": "Loss", "time": "Time"}


def canonical_name(kind: str, phase: str, stream: str, task: int, exp: int | None, granularity: str) -> str:
    """``<Kind>_<Gran>/<phase>_phase/<stream>_stream/Task<ttt>[/Exp<eee>]``.

    Stream-granularity names carry no experience segment.
    """
    name = f"{_KIND_TAG.get(kind, kind)}_{_GRAN_TAG[granularity]}/{phase}_phase/{stream}_stream/Task{task:03d}"
    if granularity != "stream":
        name += f"/Exp{exp:03d}"
    return name


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    x_axis: int
    granularity: str
    phase: str
    stream_name: str
    task_label: int
    experience_index: int | None

    def as_record(self) -> dict:
        return {
            "name": self.name,
            "phase": self.phase,
            "stream": self.stream_name,
            "task": self.task_label,
            "experience": self.experience_index,
            "granularity": self.granularity,
            "x_axis": self.x_axis,
            "value": self.value,
        }


class RunningMean:
    def __init__(self):
        self.total = 0.0
        self.weight = 0.0

    def update(self, value: float, weight: float = 1.0) -> None:
        self.total += float(value) * weight
        self.weight += weight

    def result(self) -> float:
        return self.total / self.weight if self.weight else 0.0

    def reset(self) -> None:
        self.total = 0.0
        self.weight = 0.0

    def state_dict(self) -> list[float]:
        return [self.total, self.weight]

    def load_state_dict(self, state) -> None:
        self.total, self.weight = float(state[0]), float(state[1])


class AccuracyMean(RunningMean):
    """Running accuracy; ``total`` counts argmax hits and ``weight`` examples."""

    def update_batch(self, logits, targets) -> None:
        accuracy_update(self, logits, targets)


def accuracy_update(state: RunningMean, logits, targets) -> None:
    logits = np.asarray(logits)
    targets = np.asarray(targets).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ShapeError(f"logits {logits.shape} do not match {targets.shape[0]} targets")
    # np.argmax returns the first maximum, i.e. the lowest class id on ties
    hits = int(np.count_nonzero(np.argmax(logits, axis=1) == targets))
    state.total += hits
    state.weight += targets.shape[0]


def accuracy_result(state: RunningMean) -> float:
    return state.result()


class AccuracyMatrix:
    """``R[k, i]``: accuracy on eval experience ``i`` after training through ``k``."""

    def __init__(self):
        self.entries: dict[tuple[int, int], float] = {}

    def record(self, k: int, i: int, acc: float) -> None:
        if not 0.0 <= acc <= 1.0:
            raise InvalidArgument(f"accuracy {acc} outside [0, 1]")
        self.entries[(int(k), int(i))] = float(acc)

    def __getitem__(self, key) -> float:
        try:
            return self.entries[key]
        except KeyError:
            raise StateError(f"accuracy matrix has no entry R{list(key)}") from None

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, AccuracyMatrix) and self.entries == other.entries

    def forgetting(self, i: int, k: int) -> float:
        return forgetting(self, i, k)

    def bwt(self, T: int) -> float:
        return bwt(self, T)

    def as_array(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        rows = max(k for k, _ in self.entries) + 1
        cols = max(i for _, i in self.entries) + 1
        out = np.full((rows, cols), np.nan)
        for (k, i), v in self.entries.items():
            out[k, i] = v
        return out

    def state_dict(self) -> list:
        return [[k, i, v] for (k, i), v in sorted(self.entries.items())]

    def load_state_dict(self, state) -> None:
        self.entries = {(int(k), int(i)): float(v) for k, i, v in state}


def record_matrix(R: AccuracyMatrix, k: int, i: int, acc: float) -> None:
    R.record(k, i, acc)


def forgetting(R: AccuracyMatrix, i: int, k: int) -> float:
    """Best earlier accuracy on ``i`` minus the accuracy after training through ``k``.

    Not clamped: a negative value means the experience improved.
    """
    prior = [R.entries[(j, i)] for j in range(k) if (j, i) in R.entries]
    if not prior:
        raise StateError(f"no accuracy recorded on experience {i} before step {k}")
    return max(prior) - R[(k, i)]


def bwt(R: AccuracyMatrix, T: int) -> float:
    """Mean over ``i < T-1`` of ``R[T-1, i] - R[i, i]``."""
    if T < 2:
        raise StateError("backward transfer needs at least two trained experiences")
    diffs = [R[(T - 1, i)] - R[(i, i)] for i in range(T - 1)]
    return float(np.mean(diffs))


class Timer:
    """Wall-clock stopwatch over a monotonic clock; no nesting."""

    def __init__(self, clock=time.perf_counter):
        self._clock = clock
        self._start: float | None = None

    @property
    def running(self) -> bool:
        return self._start is not None

    def start(self) -> None:
        if self._start is not None:
            raise StateError("timer already running")
        self._start = self._clock()

    def stop(self) -> float:
        if self._start is None:
            raise StateError("timer stopped without being started")
        elapsed = max(0.0, self._clock() - self._start)
        self._start = None
        return elapsed
