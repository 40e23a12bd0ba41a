"""Built-in continual-learning plugins: Cumulative, Replay, EWC and LwF."""
from __future__ import annotations

import numpy as np

from ..data import Dataset, balanced_joint_loader, batches, concat, with_transform_group
from ..errors import InvalidArgument
from ..grad import MASK_VALUE, log_softmax, softmax_cross_entropy
from ..models import Model, MultiHeadClassifier
from .template import Plugin, StrategyState


class CumulativePlugin(Plugin):
    """Train on the union of every experience seen so far."""

    name = "cumulative"

    def __init__(self):
        self.seen: list[Dataset] = []

    def after_dataset_adaptation(self, state: StrategyState) -> None:
        self.seen.append(state.adapted_dataset)
        state.adapted_dataset = concat(self.seen)

    def state_dict(self) -> dict:
        return {"seen": [d.state_dict() for d in self.seen]}

    def load_state_dict(self, state: dict) -> None:
        self.seen = [Dataset.from_state_dict(d) for d in state["seen"]]


class ReplayPlugin(Plugin):
    """Mixes stored exemplars into every training mini-batch.

    The loader draws an equal share of each batch from the current data
    and from the buffer; the buffer is updated once training on an
    experience ends.
    """

    name = "replay"

    def __init__(self, buffer):
        self.buffer = buffer

    def before_training_exp(self, state: StrategyState) -> None:
        if len(self.buffer) == 0:
            return
        memory = self.buffer.contents

        def factory(st: StrategyState, seed: int):
            return balanced_joint_loader([st.adapted_dataset, memory], st.hparams.batch_size, seed)

        state.dataloader_factory = factory

    def after_training_exp(self, state: StrategyState) -> None:
        exp = state.experience
        self.buffer.update(with_transform_group(exp.dataset, "train"), exp.index)

    def state_dict(self) -> dict:
        return {"buffer": self.buffer.state_dict()}

    def load_state_dict(self, state: dict) -> None:
        self.buffer.load_state_dict(state["buffer"])


def ewc_penalty(values: dict[str, np.ndarray], anchors, lam: float):
    """Quadratic EWC penalty and its gradient.

    ``anchors`` is a sequence of ``(theta_star, fisher)`` pairs, one per
    past experience, each a dict keyed by parameter id. Returns
    ``(sum_e lam/2 * sum_k F_k (theta_k - theta*_k)^2, {id: gradient})``.
    """
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for theta_star, fisher in anchors:
        # fixed summation order, so the value survives a checkpoint round trip bit-exactly
        for pid in sorted(fisher):
            f = fisher[pid]
            diff = values[pid] - theta_star[pid]
            total += 0.5 * lam * float(np.sum(f * diff * diff))
            g = lam * f * diff
            grads[pid] = grads[pid] + g if pid in grads else g
    return total, grads


class EWCPlugin(Plugin):
    """Elastic weight consolidation with one penalty per past experience.

    Importance is the empirical Fisher diagonal: the squared mini-batch
    gradient of the task loss, averaged over at most ``fisher_batches``
    batches of the experience's training data.
    """

    name = "ewc"

    def __init__(self, lam: float, fisher_batches: int = 10):
        if lam < 0:
            raise InvalidArgument(f"EWC lambda must be >= 0, got {lam}")
        if fisher_batches < 1:
            raise InvalidArgument(f"fisher_batches must be >= 1, got {fisher_batches}")
        self.lam = float(lam)
        self.fisher_batches = int(fisher_batches)
        self.anchors: dict[int, tuple[dict, dict]] = {}

    def estimate_fisher(self, model: Model, dataset: Dataset, batch_size: int) -> dict[str, np.ndarray]:
        params = model.parameters()
        fisher = {p.id: np.zeros_like(p.value) for p in params}
        n = 0
        for mb in batches(dataset, batch_size, shuffle=False):
            if n >= self.fisher_batches:
                break
            for p in params:
                p.grad[...] = 0.0
            logits = model(mb, keep_cache=True)
            _, dlogits = softmax_cross_entropy(logits, mb.y)
            model.backward(dlogits)
            for p in params:
                fisher[p.id] += p.grad**2
            n += 1
        for p in params:
            p.grad[...] = 0.0
        if n:
            for k in fisher:
                fisher[k] /= n
        return fisher

    def after_training_exp(self, state: StrategyState) -> None:
        exp = state.experience
        ds = with_transform_group(exp.dataset, "train")
        fisher = self.estimate_fisher(state.model, ds, state.hparams.batch_size)
        theta = {p.id: p.value.copy() for p in state.model.parameters()}
        self.anchors[exp.index] = (theta, fisher)

    def penalty(self, model: Model):
        values = {p.id: p.value for p in model.parameters()}
        return ewc_penalty(values, [self.anchors[k] for k in sorted(self.anchors)], self.lam)

    def before_backward(self, state: StrategyState) -> None:
        if not self.anchors or self.lam == 0:
            return
        value, grads = self.penalty(state.model)
        state.loss += value
        for p in state.model.parameters():
            if p.id in grads:
                p.grad += grads[p.id]

    def state_dict(self) -> dict:
        return {
            "anchors": {
                str(k): {"theta": theta, "fisher": fisher}
                for k, (theta, fisher) in sorted(self.anchors.items())
            }
        }

    def load_state_dict(self, state: dict) -> None:
        self.anchors = {
            int(k): (dict(v["theta"]), dict(v["fisher"])) for k, v in state["anchors"].items()
        }


def lwf_penalty(new_logits, old_logits, mask, alpha: float, temperature: float):
    """Distillation term ``alpha * T^2 * mean_rows KL(p_old || p_new)``.

    Both distributions are tempered softmaxes restricted to the columns
    where ``mask`` (shape B x C) is True. Rows with no active column add
    nothing but still count in the batch mean. Returns the value and its
    gradient with respect to ``new_logits``.
    """
    new_logits = np.asarray(new_logits, dtype=np.float64)
    old_logits = np.asarray(old_logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    b = new_logits.shape[0]
    grad = np.zeros_like(new_logits)
    rows = np.flatnonzero(mask.any(axis=1))
    if b == 0 or rows.size == 0:
        return 0.0, grad
    m = mask[rows]
    log_q = log_softmax(np.where(m, new_logits[rows] / temperature, MASK_VALUE))
    log_p = log_softmax(np.where(m, old_logits[rows] / temperature, MASK_VALUE))
    p = np.exp(log_p)
    q = np.exp(log_q)
    kl = np.where(m, p * (log_p - log_q), 0.0).sum(axis=1)
    scale = alpha * temperature**2
    value = scale * float(kl.sum()) / b
    grad[rows] = np.where(m, alpha * temperature * (q - p) / b, 0.0)
    return value, grad


class LwFPlugin(Plugin):
    """Learning without forgetting.

    After each experience the model is snapshotted; later mini-batches are
    distilled against the snapshot on the classes it had already seen.
    """

    name = "lwf"

    def __init__(self, alpha: float, temperature: float):
        if alpha < 0:
            raise InvalidArgument(f"LwF alpha must be >= 0, got {alpha}")
        if not temperature > 0:
            raise InvalidArgument(f"LwF temperature must be > 0, got {temperature}")
        self.alpha = float(alpha)
        self.temperature = float(temperature)
        self.prev_model: Model | None = None

    def after_training_exp(self, state: StrategyState) -> None:
        self.prev_model = state.model.copy()

    def distillation_inputs(self, x, task_labels, new_logits):
        """Old logits padded to the new width, and the per-row class mask."""
        b, c = new_logits.shape
        old = np.full((b, c), MASK_VALUE)
        mask = np.zeros((b, c), dtype=bool)
        head = self.prev_model.head
        tl = np.asarray(task_labels, dtype=np.int64)
        multi = isinstance(head, MultiHeadClassifier)
        # rows of tasks the snapshot never saw are not distilled
        rows = np.flatnonzero(np.isin(tl, head.known_tasks())) if multi else np.arange(b)
        if rows.size == 0:
            return old, mask
        out = self.prev_model.forward(x[rows], tl[rows])
        width = min(out.shape[1], c)
        old[rows, :width] = out[:, :width]
        for t, h in head.heads_for(tl[rows]).items():
            sel = rows[tl[rows] == t] if multi else rows
            cols = [k for k in sorted(h.seen_classes) if k < c]
            mask[np.ix_(sel, cols)] = True
        return old, mask

    def before_backward(self, state: StrategyState) -> None:
        if self.prev_model is None or self.alpha == 0:
            return
        mb = state.mbatch
        old, mask = self.distillation_inputs(mb.x, mb.task_labels, state.mb_logits)
        value, grad = lwf_penalty(state.mb_logits, old, mask, self.alpha, self.temperature)
        state.loss += value
        state.dlogits = state.dlogits + grad

    def state_dict(self) -> dict:
        return {"prev_model": None if self.prev_model is None else self.prev_model.state_dict()}

    def load_state_dict(self, state: dict) -> None:
        snap = state["prev_model"]
        self.prev_model = None if snap is None else Model.from_state_dict(snap)
