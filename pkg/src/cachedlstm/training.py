"""Training loop: cross-entropy objective with L2, Adagrad updates, and a
deterministic epoch driver that snapshots the best-on-dev parameters.

The objective over a batch of m documents is

    J = -(1/m) * sum_i log p_i[gold_i]  +  (lambda/2) * sum ||theta||^2

where the L2 sum runs over the parameters that entered the batch's graph;
for the embedding matrix only the rows the batch actually touched are
penalized, so untouched rows are not dragged toward zero by documents that
never mention them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tape,
    Var,
    add,
    backward,
    log_floor,
    mul,
    mul_const,
    pick_cols,
    sum_all,
    take_rows,
)
from .data import make_batches
from .evaluation import accuracy, mse
from .model import DocModel

PROB_FLOOR = 1e-12  # probabilities are floored before the log
ADAGRAD_EPS = 1e-6


class TrainingDiverged(RuntimeError):
    """Raised when the objective stops being finite."""


@dataclass
class TrainConfig:
    """Optimization settings.

    target_dev_acc, when set, stops training early once the dev accuracy
    reaches it; the epoch log still records every epoch that ran.
    """

    learning_rate: float = 0.01
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 10
    seed: int = 0
    gradient_clip_norm: float | None = None
    sort_bucket: bool = False
    target_dev_acc: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.gradient_clip_norm is not None and self.gradient_clip_norm <= 0:
            raise ValueError("gradient_clip_norm must be positive when set")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "gradient_clip_norm": self.gradient_clip_norm,
            "sort_bucket": self.sort_bucket,
            "target_dev_acc": self.target_dev_acc,
        }


def objective(probs: Var, gold: np.ndarray, reg_vars: list | None = None,
              weight_decay: float = 0.0) -> Var:
    """Mean negative log probability of the gold classes, plus L2.

    gold holds 0-based class indices, one per row of probs.  Probabilities
    are floored at 1e-12 inside the log so a saturated softmax cannot
    produce an infinite loss.
    """
    m, n_classes = probs.shape
    gold = np.asarray(gold)
    if gold.shape != (m,):
        raise ValueError(f"gold must have shape ({m},), got {gold.shape}")
    if gold.min() < 0 or gold.max() >= n_classes:
        raise ValueError(
            f"gold labels must lie in 0..{n_classes - 1}, got range "
            f"[{gold.min()}, {gold.max()}]"
        )
    picked = pick_cols(probs, gold)
    loss = mul_const(sum_all(log_floor(picked, PROB_FLOOR)), -1.0 / m)
    if weight_decay > 0.0 and reg_vars:
        penalty = None
        for v in reg_vars:
            term = sum_all(mul(v, v))
            penalty = term if penalty is None else add(penalty, term)
        loss = add(loss, mul_const(penalty, weight_decay / 2.0))
    return loss


def adagrad_update(theta: np.ndarray, grad: np.ndarray, acc: np.ndarray,
                   lr: float, eps: float = ADAGRAD_EPS) -> None:
    """One in-place Adagrad step: acc += g*g; theta -= lr * g / (sqrt(acc) + eps)."""
    acc += grad * grad
    theta -= lr * grad / (np.sqrt(acc) + eps)


class AdagradState:
    """Per-tensor squared-gradient accumulators, created lazily."""

    def __init__(self, eps: float = ADAGRAD_EPS):
        self.eps = eps
        self.accumulators: dict[str, np.ndarray] = {}

    def update(self, name: str, theta: np.ndarray, grad: np.ndarray, lr: float) -> None:
        acc = self.accumulators.get(name)
        if acc is None:
            acc = np.zeros_like(theta)
            self.accumulators[name] = acc
        adagrad_update(theta, grad, acc, lr, self.eps)


def _clip_grads(named_grads: dict, clip_norm: float) -> dict:
    total = 0.0
    for g in named_grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm <= clip_norm or norm == 0.0:
        return named_grads
    scale = clip_norm / norm
    # Scale into new arrays; the originals may be views into tape buffers.
    return {name: g * scale for name, g in named_grads.items()}


def train_epoch(model: DocModel, batches: list, cfg: TrainConfig,
                opt: AdagradState) -> float:
    """One pass over the batches; returns the mean batch objective.

    Aborts with TrainingDiverged (naming the batch) if the loss is ever
    NaN or infinite, leaving the parameters as they were at that point.
    """
    if not batches:
        raise ValueError("train_epoch: no batches")
    emb_trainable = model.embedding.trainable
    losses = []
    for index, batch in enumerate(batches):
        tape = Tape()
        probs, leaves = model.forward_batch(tape, batch)
        reg = []
        if cfg.weight_decay > 0.0:
            for name, v in leaves.items():
                if name == "embedding":
                    continue
                reg.append(v)
            if emb_trainable:
                touched = np.unique(batch.ids)
                reg.append(take_rows(leaves["embedding"], touched))
        loss = objective(probs, batch.labels, reg, cfg.weight_decay)
        value = float(loss.value[0, 0])
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite objective ({value}) at batch {index}"
            )
        grads = backward(tape, loss)
        named_grads = {name: grads[v.nid] for name, v in leaves.items()}
        if not emb_trainable:
            named_grads.pop("embedding", None)
        if cfg.gradient_clip_norm is not None:
            named_grads = _clip_grads(named_grads, cfg.gradient_clip_norm)
        tensors = model.named_tensors()
        for name, grad in named_grads.items():
            opt.update(name, tensors[name], grad, cfg.learning_rate)
        losses.append(value)
    return float(np.mean(losses))


@dataclass
class EpochStats:
    """One row of the convergence log."""

    epoch: int
    train_loss: float
    dev_acc: float
    dev_mse: float
    seconds: float


@dataclass
class TrainReport:
    """Full training outcome: per-epoch stats and the best-on-dev snapshot."""

    epochs: list
    best_epoch: int
    best_dev_acc: float
    best_dev_mse: float
    best_tensors: dict = field(repr=False)


def _snapshot(model: DocModel) -> dict:
    return {name: t.copy() for name, t in model.named_tensors().items()}


def _dev_metrics(model: DocModel, dev_docs: list, batch_size: int):
    preds = model.predict(dev_docs, batch_size=batch_size)
    gold = np.array([d.label for d in dev_docs])
    return accuracy(preds, gold), mse(preds, gold)


def fit(model: DocModel, train_docs: list, dev_docs: list,
        cfg: TrainConfig) -> TrainReport:
    """Train with per-epoch reshuffling and keep the best-on-dev weights.

    Batch order in epoch e is drawn from (seed, e), so runs with the same
    seed see identical batch streams.  The model is left holding the best
    snapshot's weights when training ends.  The initial parameters count as
    epoch 0, and accuracy ties keep the earlier epoch, so a run that never
    beats its starting point reports best_epoch 0.
    """
    if not train_docs:
        raise ValueError("fit: no training documents")
    if not dev_docs:
        raise ValueError("fit: no dev documents")
    train_keys = {(d.label, tuple(d.tokens)) for d in train_docs}
    for d in dev_docs:
        if (d.label, tuple(d.tokens)) in train_keys:
            raise ValueError("fit: train and dev sets overlap")
    opt = AdagradState()
    best_acc, best_mse_ = _dev_metrics(model, dev_docs, cfg.batch_size)
    best_epoch = 0
    best_tensors = _snapshot(model)
    epochs = []
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        batches = make_batches(
            train_docs, model.vocab, cfg.batch_size,
            seed=np.random.SeedSequence([cfg.seed, epoch]),
            shuffle=True, sort_bucket=cfg.sort_bucket,
        )
        train_loss = train_epoch(model, batches, cfg, opt)
        dev_acc, dev_mse = _dev_metrics(model, dev_docs, cfg.batch_size)
        seconds = time.perf_counter() - started
        epochs.append(EpochStats(epoch=epoch, train_loss=train_loss,
                                 dev_acc=dev_acc, dev_mse=dev_mse,
                                 seconds=seconds))
        if dev_acc > best_acc:
            best_acc, best_mse_, best_epoch = dev_acc, dev_mse, epoch
            best_tensors = _snapshot(model)
        if cfg.target_dev_acc is not None and dev_acc >= cfg.target_dev_acc:
            break
    model.set_named_tensors(best_tensors)
    return TrainReport(epochs=epochs, best_epoch=best_epoch,
                       best_dev_acc=best_acc, best_dev_mse=best_mse_,
                       best_tensors=best_tensors)
