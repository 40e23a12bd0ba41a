import numpy as np
import pytest

from clengine.data import Dataset


def central_diff(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def random_dataset(rng: np.random.Generator, n=None, dim=None, n_classes=4) -> Dataset:
    n = int(rng.integers(0, 12)) if n is None else n
    dim = int(rng.integers(1, 4)) if dim is None else dim
    return Dataset(
        rng.standard_normal((n, dim)),
        rng.integers(0, n_classes, size=n),
        {"task_label": rng.integers(0, 3, size=n), "origin": np.arange(n) + 1000 * int(rng.integers(0, 100))},
    )


def rows(ds: Dataset) -> list:
    return [(tuple(x.tolist()), y, tuple(sorted(a.items()))) for x, y, a in (ds.example(i) for i in range(len(ds)))]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_idx(path, magic: int, arr: np.ndarray) -> None:
    """Minimal IDX writer used to build fixtures (big-endian header, uint8 payload)."""
    import gzip
    import struct

    arr = np.asarray(arr, dtype=np.uint8)
    blob = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(blob)


def same_dataset(a, b) -> bool:
    return len(a) == len(b) and rows(a) == rows(b)


class OracleModel:
    """Parameter-free stand-in whose prediction for a row is ``int(x[0])``.

    Lets tests fix predictions exactly and recount accuracy independently.
    """

    def __init__(self, n_classes: int = 10):
        self.n_classes = n_classes

    def adapt(self, exp):
        pass

    def parameters(self):
        return []

    def __call__(self, batch, keep_cache=False):
        logits = np.zeros((len(batch.y), self.n_classes))
        logits[np.arange(len(batch.y)), batch.x[:, 0].astype(int)] = 1.0
        return logits

    def backward(self, dlogits):
        pass


def oracle_experience(index, preds, targets, stream="test"):
    from clengine.benchmarks import Experience

    ds = Dataset(np.asarray(preds, dtype=float).reshape(-1, 1), targets)
    return Experience(index, stream, ds, 0, sorted(set(int(t) for t in targets)))


def tiny_benchmark(seed=0, n_classes=6, n_experiences=3, dim=4, task_labels=False):
    from clengine.benchmarks import split_synthetic

    return split_synthetic(n_classes=n_classes, n_experiences=n_experiences, n_per_class=12,
                           n_test_per_class=6, dim=dim, spread=0.5, seed=seed, task_labels=task_labels)


def tiny_model(dim=4, seed=0, multihead=False):
    from clengine.grad import init_network
    from clengine.models import IncrementalClassifier, Model, MultiHeadClassifier

    head = MultiHeadClassifier(6, seed + 1) if multihead else IncrementalClassifier(6, seed + 1)
    return Model(init_network([dim, 6], seed, final_activation="relu"), head)


def tiny_strategy(name="naive", seed=0, evaluator=None, extra=(), epochs=2, multihead=False, **params):
    from clengine.training import STRATEGIES, TrainHParams

    hp = TrainHParams(lr=0.05, epochs=epochs, batch_size=8)
    return STRATEGIES[name](tiny_model(seed=seed, multihead=multihead), hp, evaluator=evaluator,
                            rng=seed, extra=extra, **params)


SMALL_CONFIG = """
seed = 3
loggers = ["csv", "jsonl", "text"]

[benchmark]
kind = "split_synthetic"
n_classes = 10
n_experiences = 5
n_per_class = 20
n_test_per_class = 10
dim = 8

[model]
hidden = [16]

[strategy]
name = "{strategy}"

[train]
lr = 0.05
epochs = 3
batch_size = 16
"""


def write_config(tmp_path, strategy="naive", extra="", name="cfg.toml"):
    p = tmp_path / name
    p.write_text(SMALL_CONFIG.format(strategy=strategy) + extra)
    return p


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
