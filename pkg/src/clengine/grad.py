"""Minimal reverse-mode core for dense multilayer perceptrons.

Matrices are float64 numpy arrays of shape (rows, cols). A network is a
chain of affine layers, each followed by ReLU or identity. Gradients are
computed by an explicit backward pass over an activation cache filled by
:func:`forward`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, ShapeError, StateError

MASK_VALUE = -1e30
ACTIVATIONS = ("relu", "identity")


@dataclass(eq=False)
class Parameter:
    id: str
    value: np.ndarray
    grad: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ShapeError(f"parameter {self.id!r} must be 2-D, got shape {self.value.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape

    def copy(self) -> "Parameter":
        return Parameter(self.id, self.value.copy(), self.grad.copy())


@dataclass(eq=False)
class Layer:
    weight: Parameter
    bias: Parameter
    activation: str = "identity"

    @property
    def fan_in(self) -> int:
        return self.weight.value.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.value.shape[1]


@dataclass(eq=False)
class Network:
    layers: list[Layer]

    def __post_init__(self):
        for k in range(len(self.layers) - 1):
            if self.layers[k].fan_out != self.layers[k + 1].fan_in:
                raise ShapeError(
                    f"layer {k} outputs {self.layers[k].fan_out} but layer {k + 1} "
                    f"expects {self.layers[k + 1].fan_in}"
                )
        ids = [p.id for p in self.parameters()]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("parameter ids must be unique within a network")

    @property
    def in_features(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_features(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "Network":
        return Network(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


@dataclass
class ActivationCache:
    """Per-layer inputs and pre-activations recorded by :func:`forward`."""

    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)

    def clear(self):
        self.inputs.clear()
        self.preacts.clear()

    def __bool__(self):
        return bool(self.inputs)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, cols: int | None = None) -> np.ndarray:
    """Uniform draws in [-b, b] with b = sqrt(6 / (fan_in + fan_out)).

    ``cols`` lets a caller draw a block narrower than ``fan_out``.
    """
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out if cols is None else cols))


def init_network(
    layout: Sequence[int],
    seed: int,
    final_activation: str = "identity",
    prefix: str = "layer",
) -> Network:
    """Xavier-uniform weights, zero biases, ReLU between hidden layers."""
    layout = list(layout)
    if len(layout) < 2:
        raise InvalidArgument(f"layout needs at least 2 sizes, got {layout}")
    if any(int(s) < 1 for s in layout):
        raise InvalidArgument(f"layer sizes must be >= 1, got {layout}")
    if final_activation not in ACTIVATIONS:
        raise InvalidArgument(f"unknown activation {final_activation!r}")
    rng = np.random.default_rng(seed)
    layers = []
    n = len(layout) - 1
    for k in range(n):
        fi, fo = int(layout[k]), int(layout[k + 1])
        w = Parameter(f"{prefix}{k}.weight", xavier_uniform(rng, fi, fo))
        b = Parameter(f"{prefix}{k}.bias", np.zeros((1, fo)))
        act = "relu" if k < n - 1 else final_activation
        layers.append(Layer(w, b, act))
    return Network(layers)


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def forward(net: Network, x, cache: ActivationCache | None = None) -> np.ndarray:
    x = _as_matrix(x)
    if x.shape[1] != net.in_features:
        raise ShapeError(f"input width {x.shape[1]} != network input size {net.in_features}")
    if cache is not None:
        cache.clear()
    h = x
    for layer in net.layers:
        z = h @ layer.weight.value + layer.bias.value
        if cache is not None:
            cache.inputs.append(h)
            cache.preacts.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return h


def backward(net: Network, cache: ActivationCache | None, dout) -> np.ndarray:
    """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
    if not cache or len(cache.inputs) != len(net.layers):
        raise StateError("backward called without a matching forward cache")
    g = _as_matrix(dout)
    if g.shape != cache.preacts[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {cache.preacts[-1].shape}")
    for layer, h, z in zip(reversed(net.layers), reversed(cache.inputs), reversed(cache.preacts)):
        if layer.activation == "relu":
            g = g * (z > 0)
        layer.weight.grad += h.T @ g
        layer.bias.grad += g.sum(axis=0, keepdims=True)
        g = g @ layer.weight.value.T
    return g


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def apply_class_mask(logits: np.ndarray, class_mask) -> np.ndarray:
    """Set masked-out columns to a large negative constant.

    ``class_mask`` is a boolean vector (C,) or a per-row matrix (B, C);
    True marks an active class.
    """
    mask = np.asarray(class_mask, dtype=bool)
    if mask.shape[-1] != logits.shape[1]:
        raise ShapeError(f"mask width {mask.shape[-1]} != logit width {logits.shape[1]}")
    return np.where(mask, logits, MASK_VALUE)


def softmax_cross_entropy(logits, targets, class_mask=None) -> tuple[float, np.ndarray]:
    logits = _as_matrix(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    b, c = logits.shape
    if targets.shape[0] != b:
        raise ShapeError(f"{targets.shape[0]} targets for a batch of {b}")
    if np.any(targets < 0) or np.any(targets >= c):
        raise InvalidArgument(f"targets must lie in [0, {c}), got {targets.tolist()}")
    if class_mask is not None:
        logits = apply_class_mask(logits, class_mask)
    logp = log_softmax(logits)
    rows = np.arange(b)
    loss = float(-logp[rows, targets].mean())
    probs = np.exp(logp)
    dlogits = probs
    dlogits[rows, targets] -= 1.0
    dlogits /= b
    if class_mask is not None:
        dlogits = np.where(np.asarray(class_mask, dtype=bool), dlogits, 0.0)
    return loss, dlogits


def _params(obj) -> list[Parameter]:
    if hasattr(obj, "parameters"):
        return list(obj.parameters())
    return list(obj)


def zero_grads(net) -> None:
    for p in _params(net):
        p.grad[...] = 0.0


def sgd_step(net, lr: float) -> None:
    """``value -= lr * grad`` for a network, a model, or a parameter list."""
    if not lr > 0:
        raise InvalidArgument(f"learning rate must be positive, got {lr}")
    for p in _params(net):
        p.value -= lr * p.grad


class SGD:
    """Plain SGD over an explicit parameter view.

    The view is refreshed with :meth:`set_parameters` whenever the model's
    parameter list changes (e.g. after a head grows).
    """

    def __init__(self, params: Iterable[Parameter], lr: float):
        if not lr > 0:
            raise InvalidArgument(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.params = list(params)

    def set_parameters(self, params: Iterable[Parameter]) -> None:
        self.params = list(params)

    @property
    def param_ids(self) -> list[str]:
        return [p.id for p in self.params]

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def step(self) -> None:
        sgd_step(self.params, self.lr)
