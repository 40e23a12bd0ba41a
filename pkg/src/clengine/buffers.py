"""Replay memories: reservoir sampling and class/experience balanced groups."""
from __future__ import annotations

import numpy as np

from .data import Dataset, concat, subsample
from .errors import InvalidArgument
from .rng import derive_seed, generator_from_state, generator_state


class ReservoirBuffer:
    """Uniform fixed-size sample of everything ever passed to :meth:`update`.

    Item number ``t`` (1-based over the buffer's lifetime) is admitted with
    probability ``max_size / t`` and replaces a uniformly chosen resident.
    """

    def __init__(self, max_size: int, seed: int = 0):
        if max_size < 0:
            raise InvalidArgument(f"max_size must be >= 0, got {max_size}")
        self.max_size = int(max_size)
        self.seen_count = 0
        self._rng = np.random.default_rng(seed)
        self._data: Dataset | None = None

    def __len__(self) -> int:
        return 0 if self._data is None else len(self._data)

    @property
    def contents(self) -> Dataset | None:
        return self._data

    def update(self, incoming: Dataset, exp_index: int | None = None) -> None:
        n_new = len(incoming)
        if n_new == 0:
            return
        old = self._data
        n_old = 0 if old is None else len(old)
        # slots hold indices into concat(old, incoming)
        slots = list(range(n_old))
        for j in range(n_new):
            self.seen_count += 1
            if len(slots) < self.max_size:
                slots.append(n_old + j)
            else:
                r = int(self._rng.integers(0, self.seen_count))
                if r < self.max_size:
                    slots[r] = n_old + j
        pool = incoming if old is None else concat([old, incoming])
        self._data = subsample(pool, slots)

    def resize(self, new_size: int) -> None:
        if new_size < 0:
            raise InvalidArgument(f"new_size must be >= 0, got {new_size}")
        self.max_size = int(new_size)
        if len(self) > new_size:
            keep = np.sort(self._rng.choice(len(self), size=new_size, replace=False))
            self._data = subsample(self._data, keep)

    def state_dict(self) -> dict:
        return {
            "max_size": self.max_size,
            "seen_count": self.seen_count,
            "rng": generator_state(self._rng),
            "data": None if self._data is None else self._data.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.max_size = int(state["max_size"])
        self.seen_count = int(state["seen_count"])
        self._rng = generator_from_state(state["rng"])
        self._data = None if state["data"] is None else Dataset.from_state_dict(state["data"])


def group_quotas(max_size: int, keys) -> dict[int, int]:
    """Equal split of ``max_size`` over ``keys``; the remainder goes to the lowest keys."""
    keys = sorted(keys)
    if not keys:
        return {}
    base, rem = divmod(max_size, len(keys))
    return {k: base + (1 if pos < rem else 0) for pos, k in enumerate(keys)}


class _BalancedBuffer:
    """Reservoir per group, with quotas recomputed whenever a group appears."""

    def __init__(self, max_size: int, seed: int = 0):
        if max_size < 0:
            raise InvalidArgument(f"max_size must be >= 0, got {max_size}")
        self.max_size = int(max_size)
        self.seed = int(seed)
        self.groups: dict[int, ReservoirBuffer] = {}

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())

    @property
    def contents(self) -> Dataset | None:
        parts = [self.groups[k].contents for k in sorted(self.groups) if len(self.groups[k])]
        return concat(parts) if parts else None

    def quotas(self) -> dict[int, int]:
        return group_quotas(self.max_size, self.groups)

    def group_sizes(self) -> dict[int, int]:
        return {k: len(g) for k, g in sorted(self.groups.items())}

    def _new_group(self, key: int) -> ReservoirBuffer:
        return ReservoirBuffer(0, derive_seed(self.seed, f"group/{key}"))

    def _feed(self, parts: dict[int, Dataset]) -> None:
        for key in parts:
            if key not in self.groups:
                self.groups[key] = self._new_group(key)
        for key, q in self.quotas().items():
            self.groups[key].resize(q)
        for key in sorted(parts):
            self.groups[key].update(parts[key])

    def resize(self, new_size: int) -> None:
        if new_size < 0:
            raise InvalidArgument(f"new_size must be >= 0, got {new_size}")
        self.max_size = int(new_size)
        for key, q in self.quotas().items():
            self.groups[key].resize(q)

    def state_dict(self) -> dict:
        return {
            "max_size": self.max_size,
            "seed": self.seed,
            "groups": {str(k): g.state_dict() for k, g in sorted(self.groups.items())},
        }

    def load_state_dict(self, state: dict) -> None:
        self.max_size = int(state["max_size"])
        self.seed = int(state["seed"])
        self.groups = {}
        for k, gs in state["groups"].items():
            g = self._new_group(int(k))
            g.load_state_dict(gs)
            self.groups[int(k)] = g


class ClassBalancedBuffer(_BalancedBuffer):
    def update(self, incoming: Dataset, exp_index: int | None = None) -> None:
        if len(incoming) == 0:
            return
        y = incoming.targets
        self._feed({int(c): subsample(incoming, np.flatnonzero(y == c)) for c in np.unique(y)})


class ExperienceBalancedBuffer(_BalancedBuffer):
    def update(self, incoming: Dataset, exp_index: int | None = None) -> None:
        if exp_index is None:
            raise InvalidArgument("experience-balanced buffers need the experience index")
        if len(incoming) == 0:
            return
        self._feed({int(exp_index): incoming})


BUFFER_POLICIES = {
    "reservoir": ReservoirBuffer,
    "class_balanced": ClassBalancedBuffer,
    "experience_balanced": ExperienceBalancedBuffer,
}


def make_buffer(policy: str, max_size: int, seed: int = 0):
    try:
        cls = BUFFER_POLICIES[policy]
    except KeyError:
        raise InvalidArgument(
            f"unknown buffer policy {policy!r}; expected one of {sorted(BUFFER_POLICIES)}"
        ) from None
    return cls(max_size, seed)


def reservoir_update(buf: ReservoirBuffer, incoming: Dataset) -> None:
    buf.update(incoming)


def class_balanced_update(buf: ClassBalancedBuffer, incoming: Dataset) -> None:
    buf.update(incoming)


def experience_balanced_update(buf: ExperienceBalancedBuffer, incoming: Dataset, exp_index: int) -> None:
    buf.update(incoming, exp_index)


def resize(buf, new_size: int) -> None:
    buf.resize(new_size)
