"""Experiences, streams and benchmark generators."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import TASK_LABEL, Dataset, subsample, with_attribute
from .errors import FormatError, InvalidArgument

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class Experience:
    index: int
    stream_name: str
    dataset: Dataset
    task_label: int
    classes_in_this_experience: list[int]
    uid: str = ""

    def __post_init__(self):
        if not self.uid:
            self.uid = f"{self.stream_name}/{self.index:03d}"


@dataclass
class Stream:
    name: str
    experiences: list[Experience] = field(default_factory=list)

    def __post_init__(self):
        for pos, exp in enumerate(self.experiences):
            if exp.index != pos or exp.stream_name != self.name:
                raise InvalidArgument(
                    f"experience {exp.uid} misplaced in stream {self.name!r} at position {pos}"
                )

    def __len__(self):
        return len(self.experiences)

    def __getitem__(self, i):
        return self.experiences[i]

    def __iter__(self):
        return iter(self.experiences)


@dataclass
class Benchmark:
    train_stream: Stream
    test_stream: Stream
    class_order: list[int]

    def __post_init__(self):
        if len(self.train_stream) != len(self.test_stream):
            raise InvalidArgument("train and test streams must have the same length")

    @property
    def n_experiences(self) -> int:
        return len(self.train_stream)

    @property
    def streams(self) -> dict[str, Stream]:
        return {"train": self.train_stream, "test": self.test_stream}


def _make_stream(name: str, datasets, task_labels, classes) -> Stream:
    exps = []
    for i, (ds, t, cls) in enumerate(zip(datasets, task_labels, classes)):
        ds = with_attribute(ds, TASK_LABEL, np.full(len(ds), t, dtype=np.int64))
        exps.append(Experience(i, name, ds, int(t), sorted(int(c) for c in cls)))
    return Stream(name, exps)


def class_incremental(
    train: Dataset,
    test: Dataset,
    n_experiences: int,
    class_order_seed: int | None = None,
    fixed_class_order: Sequence[int] | None = None,
    task_labels: bool = False,
) -> Benchmark:
    """Split the class universe into ``n_experiences`` equal, disjoint groups."""
    if n_experiences < 1:
        raise InvalidArgument(f"n_experiences must be >= 1, got {n_experiences}")
    classes = train.classes()
    missing = sorted(set(classes) - set(test.classes()))
    if missing:
        raise InvalidArgument(f"classes {missing} have no test examples")
    extra = sorted(set(test.classes()) - set(classes))
    if extra:
        raise InvalidArgument(f"classes {extra} appear only in the test set")
    if len(classes) % n_experiences:
        raise InvalidArgument(
            f"{len(classes)} classes cannot be split evenly into {n_experiences} experiences"
        )
    if fixed_class_order is not None:
        order = [int(c) for c in fixed_class_order]
        if sorted(order) != classes:
            raise InvalidArgument(f"fixed_class_order {order} is not a permutation of {classes}")
    elif class_order_seed is not None:
        order = [int(c) for c in np.random.default_rng(class_order_seed).permutation(classes)]
    else:
        order = list(classes)
    per = len(order) // n_experiences
    groups = [order[i * per : (i + 1) * per] for i in range(n_experiences)]

    def split(ds):
        return [subsample(ds, np.flatnonzero(np.isin(ds.targets, g))) for g in groups]

    tl = list(range(n_experiences)) if task_labels else [0] * n_experiences
    return Benchmark(
        _make_stream("train", split(train), tl, groups),
        _make_stream("test", split(test), tl, groups),
        order,
    )


def instance_incremental(train: Dataset, test: Dataset, n_experiences: int, seed: int = 0) -> Benchmark:
    """Split the training rows into near-equal, class-stratified parts.

    Rows are shuffled, stably grouped by class, then dealt round-robin so
    every part sees every class whenever that class has enough rows.
    Each test experience is the full test set.
    """
    n = len(train)
    if n_experiences < 1 or n_experiences > n:
        raise InvalidArgument(f"n_experiences must lie in [1, {n}], got {n_experiences}")
    perm = np.random.default_rng(seed).permutation(n)
    dealt = perm[np.argsort(train.targets[perm], kind="stable")]
    owner = np.arange(n) % n_experiences
    rank = np.empty(n, dtype=np.int64)
    rank[perm] = np.arange(n)
    parts = []
    for k in range(n_experiences):
        mine = dealt[owner == k]
        # restore shuffled order inside the part
        parts.append(mine[np.argsort(rank[mine], kind="stable")])
    train_sets = [subsample(train, p) for p in parts]
    classes = [ds.classes() for ds in train_sets]
    return Benchmark(
        _make_stream("train", train_sets, [0] * n_experiences, classes),
        _make_stream("test", [test] * n_experiences, [0] * n_experiences, [test.classes()] * n_experiences),
        train.classes(),
    )


def _blob_centers(rng: np.random.Generator, n_classes: int, dim: int, radius: float = 5.0) -> np.ndarray:
    c = rng.standard_normal((n_classes, dim))
    norms = np.linalg.norm(c, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return radius * c / norms


def gaussian_blobs(
    n_classes: int,
    n_per_class: int,
    dim: int,
    cluster_spread: float,
    seed: int,
) -> Dataset:
    """Isotropic Gaussian clusters centred on random points of the radius-5 sphere.

    Rows are ordered class by class.
    """
    if min(n_classes, n_per_class, dim) < 1:
        raise InvalidArgument("n_classes, n_per_class and dim must all be >= 1")
    if cluster_spread < 0:
        raise InvalidArgument(f"cluster_spread must be >= 0, got {cluster_spread}")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(rng, n_classes, dim)
    y = np.repeat(np.arange(n_classes), n_per_class)
    x = centers[y] + cluster_spread * rng.standard_normal((y.size, dim))
    return Dataset(x, y)


def split_synthetic(
    n_classes: int = 10,
    n_experiences: int = 5,
    n_per_class: int = 100,
    dim: int = 16,
    spread: float = 0.5,
    seed: int = 0,
    n_test_per_class: int = 50,
    class_order_seed: int | None = None,
    fixed_class_order: Sequence[int] | None = None,
    task_labels: bool = False,
) -> Benchmark:
    """Class-incremental benchmark over Gaussian blobs sharing one set of centres."""
    full = gaussian_blobs(n_classes, n_per_class + n_test_per_class, dim, spread, seed)
    per = n_per_class + n_test_per_class
    pos = np.arange(len(full)) % per
    train = subsample(full, np.flatnonzero(pos < n_per_class))
    test = subsample(full, np.flatnonzero(pos >= n_per_class))
    return class_incremental(
        train,
        test,
        n_experiences,
        class_order_seed=class_order_seed,
        fixed_class_order=fixed_class_order,
        task_labels=task_labels,
    )


def _read_idx(path: Path, magic: int) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:
            raw = f.read()
    except (OSError, EOFError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise FormatError(f"{path}: unreadable IDX file ({e})") from e
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(raw) - header
    if payload != expected:
        kind = "truncated" if payload < expected else "oversized"
        raise FormatError(f"{path}: {kind} payload, {payload} bytes for dims {dims}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label pair (optionally gzipped) into a dataset.

    Pixels are scaled to [0, 1]; images are flattened row-major.
    """
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC)
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64))


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def split_mnist(
    n_experiences: int = 5,
    data_dir=".",
    seed: int | None = 0,
    fixed_class_order: Sequence[int] | None = None,
    task_labels: bool = False,
) -> Benchmark:
    d = Path(data_dir)
    train = load_idx(_find(d, MNIST_FILES["train_images"]), _find(d, MNIST_FILES["train_labels"]))
    test = load_idx(_find(d, MNIST_FILES["test_images"]), _find(d, MNIST_FILES["test_labels"]))
    return class_incremental(
        train,
        test,
        n_experiences,
        class_order_seed=seed,
        fixed_class_order=fixed_class_order,
        task_labels=task_labels,
    )
