"""Gradient-descent training of the small classifiers on a labeled dataset."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from topk_lab.core import InvalidInputError, seeded_rng, topk_mask
from topk_lab.losses import batch_loss, loss_by_name, one_hot
from topk_lab.metrics import AccuracyCurve, accuracy_curve, label_ranks
from topk_lab.model import ModelParams, backward, forward
from topk_lab.synthdata import LabeledDataset


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, window: tuple[int, int], value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, samples [{window[0]}, {window[1]})")
        self.epoch = epoch
        self.window = window
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "ce"
    k: int = 2
    epochs: int = 1000
    batch_size: int | None = None  # None: full batch
    learning_rate: float = 0.5
    lr_milestones: tuple[int, ...] = ()  # epochs after which lr is multiplied by lr_gamma
    lr_gamma: float = 0.2
    momentum: float = 0.0
    seed: int = 0  # mini-batch shuffling only
    differentiate_weights: bool = True  # transition loss only

    def __post_init__(self):
        loss_by_name(self.loss)
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must be in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        drops = sum(1 for m in self.lr_milestones if epoch > m)
        return self.learning_rate * self.lr_gamma**drops

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_milestones" in d:
            d["lr_milestones"] = tuple(d["lr_milestones"])
        return cls(**d)


@dataclass
class TrainHistory:
    """Per-epoch training-set metrics, measured at the start of each epoch.

    ``topk_mass`` is the mean softmax mass of the top-k classes.
    """

    epoch: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    top1: list[float] = field(default_factory=list)
    topk: list[float] = field(default_factory=list)
    topk_mass: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epoch)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "loss", "top1", "topk"])
            for row in zip(self.epoch, self.loss, self.top1, self.topk):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _loss_fn(cfg: TrainConfig):
    return lambda s, t: batch_loss(cfg.loss, s, t, cfg.k, cfg.differentiate_weights)


def _step(params, velocity, grads: ModelParams, lr: float, mu: float):
    new, vel = {}, {}
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        v = mu * velocity[name] - lr * g if mu else -lr * g
        vel[name] = v
        new[name] = p + v
    return ModelParams(**new), vel


def train(
    params: ModelParams, dataset: LabeledDataset, cfg: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Train ``params`` on ``dataset``; deterministic given the inputs.

    Each step applies the batch-mean loss gradient with heavy-ball momentum:
    ``v <- mu * v - lr * g``, ``p <- p + v``.
    """
    x, y = dataset.points, dataset.labels
    m = len(y)
    if m == 0:
        raise InvalidInputError("empty dataset")
    if not cfg.k <= params.n_classes - 1:
        raise InvalidInputError(f"k={cfg.k} invalid for {params.n_classes} classes")
    loss_fn = _loss_fn(cfg)
    targets = one_hot(y, params.n_classes)
    velocity = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    hist = TrainHistory()
    shuffle = seeded_rng(cfg.seed) if cfg.batch_size is not None else None

    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_at(epoch)
        trace = forward(params, x)
        res = loss_fn(trace.logits, targets)
        _check_finite(res.value, epoch, 0)
        ranks = label_ranks(trace.probs, y)
        hist.epoch.append(epoch)
        hist.loss.append(float(np.mean(res.value)))
        hist.top1.append(float(np.count_nonzero(ranks < 1)) / m)
        hist.topk.append(float(np.count_nonzero(ranks < cfg.k)) / m)
        hist.topk_mass.append(float(np.mean(np.where(topk_mask(trace.probs, cfg.k), trace.probs, 0.0).sum(axis=1))))

        if shuffle is None:
            grads = backward(params, trace, res.grad_logits / m)
            params, velocity = _step(params, velocity, grads, lr, cfg.momentum)
            continue
        order = shuffle.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bt = forward(params, x[idx])
            br = loss_fn(bt.logits, targets[idx])
            _check_finite(br.value, epoch, start, start + len(idx))
            grads = backward(params, bt, br.grad_logits / len(idx))
            params, velocity = _step(params, velocity, grads, lr, cfg.momentum)
    return params, hist


def _check_finite(values, epoch: int, start: int, stop: int | None = None) -> None:
    values = np.asarray(values)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        stop = start + values.size if stop is None else stop
        raise TrainingDivergedError(epoch, (start, stop), float(values[bad[0]]))


def evaluate(params: ModelParams, dataset: LabeledDataset) -> AccuracyCurve:
    return accuracy_curve(forward(params, dataset.points).probs, dataset.labels)
