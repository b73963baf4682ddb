"""Small teacher -> student distillation demo on 2-D Gaussian blobs.

Everything is plain numpy: an MLP with ReLU hidden layers, softmax cross
entropy, SGD with momentum, and the ITRD losses from :mod:`itrd.losses`.
Runs are fully determined by their seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, TrainingError
from .losses import EmbeddingLayer, ItrdConfig, itrd_loss_and_grad

log = logging.getLogger(__name__)

TEACHER_HIDDEN = (64, 64, 16)
STUDENT_HIDDEN = (16, 8)
EPOCHS = 200
LR = 0.05
MOMENTUM = 0.9
BATCH_SIZE = 64
N_PER_CLASS = 100
CLASSES = 3
SPREAD = 1.2
RADIUS = 2.0

# one independent generator per purpose, all derived from the run seed
_STREAMS = {
    "data": 0,
    "teacher_init": 1,
    "teacher_shuffle": 2,
    "student_init": 3,
    "student_shuffle": 4,
    "embed_init": 5,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


@dataclass
class SyntheticDataset:
    points: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    classes: int

    @property
    def x_train(self):
        return self.points[self.train_idx]

    @property
    def y_train(self):
        return self.labels[self.train_idx]

    @property
    def x_test(self):
        return self.points[self.test_idx]

    @property
    def y_test(self):
        return self.labels[self.test_idx]


def generate_blobs(seed: int, n_per_class: int = N_PER_CLASS, classes: int = CLASSES,
                   spread: float = SPREAD, test_fraction: float = 0.5) -> SyntheticDataset:
    """Isotropic Gaussian clusters centred on a circle of radius 2.

    Each class is split separately so train and test stay balanced.
    """
    if classes < 2:
        raise DomainError(f"need at least 2 classes, got {classes}")
    if n_per_class < 10:
        raise DomainError(f"need at least 10 points per class, got {n_per_class}")
    if spread < 0 or not 0.0 < test_fraction < 1.0:
        raise DomainError("spread must be >= 0 and test_fraction in (0, 1)")
    rng = stream(seed, "data")
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = np.repeat(np.arange(classes), n_per_class)
    points = centers[labels] + spread * rng.standard_normal((labels.size, 2))
    n_test = int(round(test_fraction * n_per_class))
    train, test = [], []
    for c in range(classes):
        idx = c * n_per_class + rng.permutation(n_per_class)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return SyntheticDataset(points, labels, np.sort(np.concatenate(train)),
                            np.sort(np.concatenate(test)), classes)


@dataclass
class MlpModel:
    """Fully connected ReLU network; the representation is the input of the last layer."""

    weights: list
    biases: list

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "MlpModel":
        if len(sizes) < 2:
            raise DimensionError("an MLP needs at least input and output sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def rep_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _forward_cache(model: MlpModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[0]:
        raise DimensionError(f"input shape {x.shape} does not match layer sizes {model.sizes}")
    acts, pre = [x], []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = a @ w + b
        a = np.maximum(h, 0.0)
        pre.append(h)
        acts.append(a)
    logits = a @ model.weights[-1] + model.biases[-1]
    return a, logits, (acts, pre)


def forward(model: MlpModel, x):
    """Return ``(representation, logits)``."""
    rep, logits, _ = _forward_cache(model, x)
    return rep, logits


def _backward(model: MlpModel, cache, grad_logits, grad_rep=None):
    acts, pre = cache
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    g = grad_logits
    gw[-1] = acts[-1].T @ g
    gb[-1] = g.sum(axis=0)
    g_a = g @ model.weights[-1].T
    if grad_rep is not None:
        g_a = g_a + grad_rep
    for layer in range(len(model.weights) - 2, -1, -1):
        g_h = g_a * (pre[layer] > 0.0)
        gw[layer] = acts[layer].T @ g_h
        gb[layer] = g_h.sum(axis=0)
        if layer:
            g_a = g_h @ model.weights[layer].T
    return gw, gb


def softmax_cross_entropy(logits, labels):
    """Mean cross entropy (nats) and its gradient with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,) or np.any(labels < 0) or np.any(labels >= c):
        raise DomainError(f"labels must be {n} integers in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    rows = np.arange(n)
    loss = float(-log_p[rows, labels].mean())
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def evaluate(model: MlpModel, x, labels) -> float:
    _, logits = forward(model, x)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


class SGD:
    """Heavy-ball SGD: ``v <- m v + g``; ``p <- p - lr v`` (updates arrays in place)."""

    def __init__(self, params, lr=LR, momentum=MOMENTUM):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= self.lr * v


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= 2:  # batch statistics need two rows
            yield idx


def train_teacher(dataset: SyntheticDataset, arch: Optional[Sequence[int]] = None,
                  epochs: int = EPOCHS, lr: float = LR, seed: int = 0,
                  momentum: float = MOMENTUM, batch_size: int = BATCH_SIZE) -> MlpModel:
    """Train a classifier with cross entropy only and return it."""
    arch = list(arch) if arch else [2, *TEACHER_HIDDEN, dataset.classes]
    model = MlpModel.init(arch, stream(seed, "teacher_init"))
    shuffle = stream(seed, "teacher_shuffle")
    opt = SGD(model.params(), lr, momentum)
    x, y = dataset.x_train, dataset.y_train
    for epoch in range(epochs):
        for idx in _batches(len(y), batch_size, shuffle):
            _, logits, cache = _forward_cache(model, x[idx])
            loss, g_logits = softmax_cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"teacher loss diverged at epoch {epoch}", epoch)
            gw, gb = _backward(model, cache, g_logits)
            opt.step([*gw, *gb])
    log.info("teacher %s trained: test acc %.4f", arch, evaluate(model, dataset.x_test, dataset.y_test))
    return model


@dataclass
class TrainRun:
    seed: int
    epochs: int
    lr: float
    momentum: float
    batch_size: int
    config: dict
    metrics: dict = field(default_factory=dict)
    final_accuracy: float = 0.0
    student: Optional[MlpModel] = None
    embed: Optional[EmbeddingLayer] = None


_SERIES = ("total", "xent", "corr", "mi", "test_acc")


def distill_student(dataset: SyntheticDataset, teacher: Optional[MlpModel],
                    student_arch: Optional[Sequence[int]] = None, cfg: ItrdConfig = ItrdConfig(),
                    epochs: int = EPOCHS, lr: float = LR, seed: int = 0,
                    momentum: float = MOMENTUM, batch_size: int = BATCH_SIZE) -> TrainRun:
    """Train a student on ``xent + beta_corr * corr + beta_mi * mi``.

    With ``teacher=None`` the run is a plain cross-entropy baseline and only
    ``total``, ``xent`` and ``test_acc`` are logged. The teacher is only read,
    never updated.
    When student and teacher representation widths differ, a trainable linear
    embedding is optimized jointly with the student.
    """
    arch = list(student_arch) if student_arch else [2, *STUDENT_HIDDEN, dataset.classes]
    student = MlpModel.init(arch, stream(seed, "student_init"))
    shuffle = stream(seed, "student_shuffle")
    embed = None
    if teacher is not None and teacher.rep_dim != student.rep_dim:
        embed = EmbeddingLayer.init(student.rep_dim, teacher.rep_dim, stream(seed, "embed_init"))
    params = student.params() + ([embed.weight, embed.bias] if embed is not None else [])
    opt = SGD(params, lr, momentum)

    x, y = dataset.x_train, dataset.y_train
    run = TrainRun(seed=seed, epochs=epochs, lr=lr, momentum=momentum, batch_size=batch_size,
                   config=cfg.to_dict() if teacher is not None else {"beta_corr": 0.0, "beta_mi": 0.0},
                   student=student, embed=embed)
    series = _SERIES if teacher is not None else ("total", "xent", "test_acc")
    run.metrics = {k: [] for k in series}
    for epoch in range(epochs):
        sums = dict.fromkeys(series[:-1], 0.0)
        batches = 0
        for idx in _batches(len(y), batch_size, shuffle):
            rep, logits, cache = _forward_cache(student, x[idx])
            xent, g_logits = softmax_cross_entropy(logits, y[idx])
            g_rep = None
            corr = mi = math.nan
            total = xent
            grads_embed = []
            if teacher is not None:
                t_rep, _ = forward(teacher, x[idx])
                parts, g = itrd_loss_and_grad(rep, t_rep, embed, xent, cfg)
                corr, mi, total = parts.corr, parts.mi, parts.total
                g_rep = g.zs
                if embed is not None:
                    grads_embed = [g.embed_weight, g.embed_bias]
                if not (math.isfinite(corr) and math.isfinite(mi)):
                    raise TrainingError(f"distillation loss is non-finite at epoch {epoch}", epoch)
            if not math.isfinite(total):
                raise TrainingError(f"loss is non-finite at epoch {epoch}", epoch)
            gw, gb = _backward(student, cache, g_logits, g_rep)
            opt.step([*gw, *gb, *grads_embed])
            for key, value in (("total", total), ("xent", xent), ("corr", corr), ("mi", mi)):
                if key in sums:
                    sums[key] += value
            batches += 1
        for key, value in sums.items():
            run.metrics[key].append(value / max(batches, 1))
        run.metrics["test_acc"].append(evaluate(student, dataset.x_test, dataset.y_test))
    run.final_accuracy = evaluate(student, dataset.x_test, dataset.y_test)
    return run
