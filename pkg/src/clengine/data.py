"""Datasets with per-example attributes, transform groups and loaders."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument, NotFound, OutOfRange

TASK_LABEL = "task_label"


@dataclass(frozen=True)
class TransformSpec:
    """Affine map ``x * scale + shift`` applied to every feature at read time."""

    scale: float = 1.0
    shift: float = 0.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.scale == 1.0 and self.shift == 0.0:
            return x
        return x * self.scale + self.shift


IDENTITY = TransformSpec()


def default_groups() -> dict[str, TransformSpec]:
    return {"train": IDENTITY, "eval": IDENTITY}


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    y: np.ndarray
    task_labels: np.ndarray

    def __len__(self):
        return self.y.shape[0]


class Dataset:
    """Immutable labelled feature matrix.

    Every derived dataset (subsample, concat, attribute or group change)
    is a new object; stored arrays are never written after construction.
    """

    __slots__ = ("_features", "_targets", "_attributes", "_groups", "_active")

    def __init__(
        self,
        features,
        targets,
        attributes: Mapping[str, Sequence[int]] | None = None,
        transform_groups: Mapping[str, TransformSpec] | None = None,
        active_group: str = "train",
    ):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        if x.ndim != 2:
            raise InvalidArgument(f"features must be 2-D, got shape {x.shape}")
        y = np.asarray(targets, dtype=np.int64).reshape(-1)
        n = x.shape[0]
        if y.shape[0] != n:
            raise InvalidArgument(f"{y.shape[0]} targets for {n} examples")
        attrs = {k: np.asarray(v, dtype=np.int64).reshape(-1) for k, v in (attributes or {}).items()}
        attrs.setdefault(TASK_LABEL, np.zeros(n, dtype=np.int64))
        for k, v in attrs.items():
            if v.shape[0] != n:
                raise InvalidArgument(f"attribute {k!r} has {v.shape[0]} values for {n} examples")
        groups = dict(transform_groups) if transform_groups is not None else default_groups()
        if active_group not in groups:
            raise NotFound(f"transform group {active_group!r} not registered")
        for arr in (x, y, *attrs.values()):
            arr.flags.writeable = False
        self._features = x
        self._targets = y
        self._attributes = attrs
        self._groups = groups
        self._active = active_group

    def __len__(self) -> int:
        return self._targets.shape[0]

    def __repr__(self):
        return f"Dataset(n={len(self)}, dim={self.dim}, group={self._active!r})"

    @property
    def dim(self) -> int:
        return self._features.shape[1]

    @property
    def raw_features(self) -> np.ndarray:
        return self._features

    @property
    def features(self) -> np.ndarray:
        """Features as seen through the active transform group."""
        return self._groups[self._active].apply(self._features)

    @property
    def targets(self) -> np.ndarray:
        return self._targets

    @property
    def task_labels(self) -> np.ndarray:
        return self._attributes[TASK_LABEL]

    @property
    def attributes(self) -> dict[str, np.ndarray]:
        return dict(self._attributes)

    @property
    def transform_groups(self) -> dict[str, TransformSpec]:
        return dict(self._groups)

    @property
    def active_transform_group(self) -> str:
        return self._active

    def attribute(self, name: str) -> np.ndarray:
        try:
            return self._attributes[name]
        except KeyError:
            raise NotFound(f"attribute {name!r} not present") from None

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self._targets))

    def example(self, i: int):
        """``(x_row, target, {attribute: value})`` for example ``i``."""
        x = self._groups[self._active].apply(self._features[i])
        return x, int(self._targets[i]), {k: int(v[i]) for k, v in self._attributes.items()}

    def _replace(self, **kw) -> "Dataset":
        args = dict(
            features=self._features,
            targets=self._targets,
            attributes=self._attributes,
            transform_groups=self._groups,
            active_group=self._active,
        )
        args.update(kw)
        return Dataset(**args)

    def subsample(self, indices) -> "Dataset":
        return subsample(self, indices)

    def with_attribute(self, name, values) -> "Dataset":
        return with_attribute(self, name, values)

    def with_transform_group(self, group) -> "Dataset":
        return with_transform_group(self, group)

    def with_transform(self, group: str, spec: TransformSpec) -> "Dataset":
        """Register (or replace) a transform group."""
        groups = dict(self._groups)
        groups[group] = spec
        return self._replace(transform_groups=groups)

    def state_dict(self) -> dict:
        return {
            "features": self._features,
            "targets": self._targets,
            "attributes": dict(self._attributes),
            "groups": {k: [v.scale, v.shift] for k, v in self._groups.items()},
            "active": self._active,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "Dataset":
        return cls(
            state["features"],
            state["targets"],
            state["attributes"],
            {k: TransformSpec(float(a), float(b)) for k, (a, b) in state["groups"].items()},
            state["active"],
        )


def empty_like(ds: Dataset) -> Dataset:
    return subsample(ds, [])


def subsample(ds: Dataset, indices) -> Dataset:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = len(ds)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        bad = idx[(idx < 0) | (idx >= n)][0]
        raise OutOfRange(f"index {int(bad)} out of range for dataset of length {n}")
    return ds._replace(
        features=ds.raw_features[idx].reshape(idx.size, ds.dim),
        targets=ds.targets[idx],
        attributes={k: v[idx] for k, v in ds._attributes.items()},
    )


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Concatenate datasets in order.

    All parts must agree on feature width, attribute names, transform
    group table and active group.
    """
    parts = list(parts)
    if not parts:
        raise InvalidArgument("concat needs at least one dataset")
    first = parts[0]
    names = set(first._attributes)
    for p in parts[1:]:
        if p.dim != first.dim:
            raise InvalidArgument(f"feature width mismatch: {p.dim} vs {first.dim}")
        if set(p._attributes) != names:
            raise InvalidArgument(
                f"attribute schema mismatch: {sorted(p._attributes)} vs {sorted(names)}"
            )
        if p._groups != first._groups or p._active != first._active:
            raise InvalidArgument("transform groups differ between concatenated datasets")
    if len(parts) == 1:
        return first
    return first._replace(
        features=np.concatenate([p.raw_features for p in parts], axis=0),
        targets=np.concatenate([p.targets for p in parts]),
        attributes={k: np.concatenate([p._attributes[k] for p in parts]) for k in first._attributes},
    )


def with_attribute(ds: Dataset, name: str, values) -> Dataset:
    vals = np.asarray(values, dtype=np.int64).reshape(-1)
    if vals.shape[0] != len(ds):
        raise InvalidArgument(f"attribute {name!r}: {vals.shape[0]} values for {len(ds)} examples")
    attrs = dict(ds._attributes)
    attrs[name] = vals
    return ds._replace(attributes=attrs)


def with_transform_group(ds: Dataset, group: str) -> Dataset:
    if group not in ds._groups:
        raise NotFound(f"transform group {group!r} not registered")
    return ds._replace(active_group=group)


def _collate(ds: Dataset, idx: np.ndarray) -> Batch:
    spec = ds._groups[ds._active]
    return Batch(spec.apply(ds.raw_features[idx]), ds.targets[idx], ds.task_labels[idx])


def batches(ds: Dataset, batch_size: int, shuffle: bool = False, seed: int = 0) -> Iterator[Batch]:
    if batch_size < 1:
        raise InvalidArgument(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    if n == 0:
        return
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        yield _collate(ds, order[start : start + batch_size])


def source_quotas(batch_size: int, n_sources: int) -> list[int]:
    base, rem = divmod(batch_size, n_sources)
    return [base + (1 if k < rem else 0) for k in range(n_sources)]


def balanced_joint_loader(sources: Sequence[Dataset], batch_size: int, seed: int = 0) -> Iterator[Batch]:
    """Mini-batches with a fixed per-source quota.

    The largest source (earliest on ties) is traversed once in shuffled
    order and sets the epoch length; every other source contributes its
    quota per batch, sampled with replacement.
    """
    sources = list(sources)
    if not sources or all(len(s) == 0 for s in sources):
        raise InvalidArgument("balanced_joint_loader needs at least one non-empty source")
    if batch_size < len(sources):
        raise InvalidArgument(f"batch_size {batch_size} smaller than the number of sources {len(sources)}")
    if any(len(s) == 0 for s in sources):
        raise InvalidArgument("every source must be non-empty")
    quotas = source_quotas(batch_size, len(sources))
    lead = max(range(len(sources)), key=lambda k: (len(sources[k]), -k))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sources[lead]))
    q_lead = quotas[lead]
    for start in range(0, len(order), q_lead):
        parts = []
        for k, src in enumerate(sources):
            if k == lead:
                idx = order[start : start + q_lead]
            else:
                idx = rng.integers(0, len(src), size=quotas[k])
            parts.append(_collate(src, idx))
        if len(parts) == 1:
            yield parts[0]
        else:
            yield Batch(
                np.concatenate([p.x for p in parts], axis=0),
                np.concatenate([p.y for p in parts]),
                np.concatenate([p.task_labels for p in parts]),
            )
