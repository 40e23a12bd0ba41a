"""Dynamic output heads and the trunk + head model used by strategies.

Heads grow by appending parameter *blocks*: a growth step adds a new
weight/bias pair covering the new output columns and never touches the
existing ones, so previously learned logits are preserved exactly.
"""
from __future__ import annotations

import copy

import numpy as np

from .data import Batch
from .errors import InvalidArgument, NotFound, ShapeError, StateError
from .grad import (
    MASK_VALUE,
    ActivationCache,
    Layer,
    Network,
    Parameter,
    backward,
    forward,
    xavier_uniform,
)
from .rng import derive_seed, generator_from_state, generator_state


def _classes_of(exp_or_classes) -> list[int]:
    if hasattr(exp_or_classes, "classes_in_this_experience"):
        return list(exp_or_classes.classes_in_this_experience)
    return [int(c) for c in exp_or_classes]


class IncrementalClassifier:
    """Single linear head whose width tracks the largest class id seen."""

    def __init__(self, in_features: int, seed: int, masking: bool = True, task_label: int = 0):
        if in_features < 1:
            raise InvalidArgument(f"in_features must be >= 1, got {in_features}")
        self.in_features = int(in_features)
        self.masking = masking
        self.task_label = int(task_label)
        self.seen_classes: set[int] = set()
        self.blocks: list[tuple[Parameter, Parameter]] = []
        self._rng = np.random.default_rng(seed)

    @property
    def n_outputs(self) -> int:
        return sum(w.value.shape[1] for w, _ in self.blocks)

    def _block_id(self, k: int, kind: str) -> str:
        return f"head.t{self.task_label:03d}.b{k:03d}.{kind}"

    def adapt(self, exp_or_classes) -> None:
        new = set(_classes_of(exp_or_classes)) - self.seen_classes
        if not new:
            return
        if min(new) < 0:
            raise InvalidArgument(f"class ids must be >= 0, got {sorted(new)}")
        self.seen_classes |= new
        needed = max(self.seen_classes) + 1
        have = self.n_outputs
        if needed > have:
            k = len(self.blocks)
            w = xavier_uniform(self._rng, self.in_features, needed, cols=needed - have)
            self.blocks.append(
                (
                    Parameter(self._block_id(k, "weight"), w),
                    Parameter(self._block_id(k, "bias"), np.zeros((1, needed - have))),
                )
            )

    @property
    def weight(self) -> np.ndarray:
        return np.concatenate([w.value for w, _ in self.blocks], axis=1)

    @property
    def bias(self) -> np.ndarray:
        return np.concatenate([b.value for _, b in self.blocks], axis=1)

    def class_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_outputs, dtype=bool)
        if self.seen_classes:
            mask[sorted(self.seen_classes)] = True
        return mask

    def forward(self, features: np.ndarray, cache: dict | None = None) -> np.ndarray:
        if not self.blocks:
            raise StateError("head has no outputs yet; adapt it to an experience first")
        if features.shape[1] != self.in_features:
            raise ShapeError(f"feature width {features.shape[1]} != head input {self.in_features}")
        # per block, so old columns never depend on the current head width
        logits = np.concatenate([features @ w.value + b.value for w, b in self.blocks], axis=1)
        if cache is not None:
            cache["features"] = features
        if self.masking:
            logits = np.where(self.class_mask(), logits, MASK_VALUE)
        return logits

    def backward(self, cache: dict | None, dlogits: np.ndarray) -> np.ndarray:
        if not cache or "features" not in cache:
            raise StateError("head backward called without a forward cache")
        h = cache["features"]
        if self.masking:
            dlogits = np.where(self.class_mask(), dlogits, 0.0)
        col = 0
        for w, b in self.blocks:
            width = w.value.shape[1]
            g = dlogits[:, col : col + width]
            w.grad += h.T @ g
            b.grad += g.sum(axis=0, keepdims=True)
            col += width
        return dlogits @ self.weight.T

    def parameters(self) -> list[Parameter]:
        params = [p for pair in self.blocks for p in pair]
        return sorted(params, key=lambda p: p.id)

    def state_dict(self) -> dict:
        return {
            "in_features": self.in_features,
            "masking": self.masking,
            "task_label": self.task_label,
            "seen_classes": sorted(self.seen_classes),
            "blocks": [[w.value, b.value] for w, b in self.blocks],
            "rng": generator_state(self._rng),
        }

    def load_state_dict(self, state: dict) -> None:
        self.in_features = int(state["in_features"])
        self.masking = bool(state["masking"])
        self.task_label = int(state["task_label"])
        self.seen_classes = {int(c) for c in state["seen_classes"]}
        self.blocks = [
            (
                Parameter(self._block_id(k, "weight"), np.array(w, dtype=np.float64)),
                Parameter(self._block_id(k, "bias"), np.array(b, dtype=np.float64)),
            )
            for k, (w, b) in enumerate(state["blocks"])
        ]
        self._rng = generator_from_state(state["rng"])

    # single-head routing interface shared with MultiHeadClassifier
    def route(self, features, task_labels, cache: dict | None = None) -> np.ndarray:
        return self.forward(features, cache)

    def route_backward(self, cache, dlogits):
        return self.backward(cache, dlogits)

    def heads_for(self, task_labels) -> dict[int, "IncrementalClassifier"]:
        return {self.task_label: self}

    def known_tasks(self) -> list[int]:
        return [self.task_label]


class MultiHeadClassifier:
    """One incremental head per task label, rows routed by their task."""

    def __init__(self, in_features: int, seed: int, masking: bool = True):
        self.in_features = int(in_features)
        self.seed = int(seed)
        self.masking = masking
        self.heads: dict[int, IncrementalClassifier] = {}

    def _new_head(self, task: int) -> IncrementalClassifier:
        return IncrementalClassifier(
            self.in_features, derive_seed(self.seed, f"head/{task}"), self.masking, task
        )

    def adapt(self, exp) -> None:
        task = int(exp.task_label)
        if task not in self.heads:
            self.heads[task] = self._new_head(task)
        self.heads[task].adapt(exp)

    def known_tasks(self) -> list[int]:
        return sorted(self.heads)

    def _check(self, task_labels) -> np.ndarray:
        tl = np.asarray(task_labels, dtype=np.int64).reshape(-1)
        unknown = sorted(set(np.unique(tl).tolist()) - set(self.heads))
        if unknown:
            raise NotFound(f"no head for task label(s) {unknown}")
        return tl

    def route(self, features, task_labels, cache: dict | None = None) -> np.ndarray:
        """Logits padded to the widest head involved; pad columns are masked."""
        tl = self._check(task_labels)
        tasks = sorted(set(tl.tolist()))
        width = max(self.heads[t].n_outputs for t in tasks) if tasks else 0
        out = np.full((features.shape[0], width), MASK_VALUE)
        for t in tasks:
            rows = np.flatnonzero(tl == t)
            sub = None if cache is None else cache.setdefault(t, {})
            if sub is not None:
                sub["rows"] = rows
            logits = self.heads[t].forward(features[rows], sub)
            out[rows, : logits.shape[1]] = logits
        return out

    def route_backward(self, cache, dlogits):
        if not cache:
            raise StateError("head backward called without a forward cache")
        dfeat = None
        for t, sub in cache.items():
            rows = sub["rows"]
            head = self.heads[t]
            g = head.backward(sub, dlogits[rows, : head.n_outputs])
            if dfeat is None:
                dfeat = np.zeros((dlogits.shape[0], g.shape[1]))
            dfeat[rows] = g
        return dfeat

    def heads_for(self, task_labels) -> dict[int, IncrementalClassifier]:
        tl = self._check(task_labels)
        return {t: self.heads[t] for t in sorted(set(tl.tolist()))}

    def parameters(self) -> list[Parameter]:
        out = []
        for t in sorted(self.heads):
            out.extend(self.heads[t].parameters())
        return out

    def state_dict(self) -> dict:
        return {
            "in_features": self.in_features,
            "seed": self.seed,
            "masking": self.masking,
            "heads": {str(t): h.state_dict() for t, h in sorted(self.heads.items())},
        }

    def load_state_dict(self, state: dict) -> None:
        self.in_features = int(state["in_features"])
        self.seed = int(state["seed"])
        self.masking = bool(state["masking"])
        self.heads = {}
        for t, hs in state["heads"].items():
            head = self._new_head(int(t))
            head.load_state_dict(hs)
            self.heads[int(t)] = head


class Model:
    """A feature trunk followed by a dynamic head.

    ``trunk`` may be ``None``, in which case the head sees raw inputs.
    """

    def __init__(self, trunk: Network | None, head):
        self.trunk = trunk
        self.head = head
        self._trunk_cache = ActivationCache()
        self._head_cache: dict | None = None

    def adapt(self, exp) -> None:
        self.head.adapt(exp)

    def forward(self, x, task_labels=None, keep_cache: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if task_labels is None:
            task_labels = np.zeros(x.shape[0], dtype=np.int64)
        if self.trunk is not None:
            feats = forward(self.trunk, x, self._trunk_cache if keep_cache else None)
        else:
            feats = x
        self._head_cache = {} if keep_cache else None
        return self.head.route(feats, task_labels, self._head_cache)

    def __call__(self, batch: Batch, keep_cache: bool = False) -> np.ndarray:
        return self.forward(batch.x, batch.task_labels, keep_cache)

    def backward(self, dlogits) -> None:
        if self._head_cache is None:
            raise StateError("backward requires a forward pass with keep_cache=True")
        dfeat = self.head.route_backward(self._head_cache, np.asarray(dlogits, dtype=np.float64))
        if self.trunk is not None:
            backward(self.trunk, self._trunk_cache, dfeat)

    def parameters(self) -> list[Parameter]:
        trunk = self.trunk.parameters() if self.trunk is not None else []
        return trunk + self.head.parameters()

    def named_values(self) -> dict[str, np.ndarray]:
        return {p.id: p.value for p in self.parameters()}

    def copy(self) -> "Model":
        return Model(self.trunk.copy() if self.trunk is not None else None, copy.deepcopy(self.head))

    def state_dict(self) -> dict:
        trunk = []
        if self.trunk is not None:
            trunk = [[l.weight.value, l.bias.value, l.activation] for l in self.trunk.layers]
        head_kind = "multihead" if isinstance(self.head, MultiHeadClassifier) else "incremental"
        return {"trunk": trunk, "head_kind": head_kind, "head": self.head.state_dict()}

    def load_state_dict(self, state: dict) -> None:
        if self.trunk is not None:
            if len(self.trunk.layers) != len(state["trunk"]):
                raise StateError("trunk layout differs from the saved state")
            for layer, (w, b, act) in zip(self.trunk.layers, state["trunk"]):
                for p, v in ((layer.weight, w), (layer.bias, b)):
                    v = np.asarray(v, dtype=np.float64)
                    if v.shape != p.value.shape:
                        raise StateError(f"shape mismatch for {p.id}: {v.shape} vs {p.value.shape}")
                    p.value = v.copy()
                    p.grad = np.zeros_like(p.value)
                layer.activation = str(act)
        elif state["trunk"]:
            raise StateError("saved state has a trunk but this model has none")
        self.head.load_state_dict(state["head"])

    @classmethod
    def from_state_dict(cls, state: dict) -> "Model":
        trunk = None
        if state["trunk"]:
            trunk = Network(
                [
                    Layer(
                        Parameter(f"layer{k}.weight", np.array(w, dtype=np.float64)),
                        Parameter(f"layer{k}.bias", np.array(b, dtype=np.float64)),
                        str(act),
                    )
                    for k, (w, b, act) in enumerate(state["trunk"])
                ]
            )
        hs = state["head"]
        if state["head_kind"] == "multihead":
            head = MultiHeadClassifier(hs["in_features"], hs["seed"], hs["masking"])
        else:
            head = IncrementalClassifier(hs["in_features"], 0, hs["masking"], hs["task_label"])
        head.load_state_dict(hs)
        return cls(trunk, head)


def forward_model(trunk: Network | None, head, batch: Batch) -> np.ndarray:
    return Model(trunk, head)(batch)


def parameters(trunk: Network | None, head) -> list[Parameter]:
    return Model(trunk, head).parameters()

