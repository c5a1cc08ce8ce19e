"""SGD training with truncated BPTT, and finite-difference gradient checking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySet, NonFiniteLoss, NonFiniteParams
from ..features.extract import Normalizer
from .models import LSTM, MLP, f32_exact, label_index

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    bptt_truncation_len: int | None = 64  # None: full-sequence BPTT
    batch_size: int = 8
    seed: int = 0
    gradient_clip_norm: float | None = 5.0
    momentum: float = 0.0
    weight_decay: float = 0.0
    halve_on_plateau: bool = True
    restore_best: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.bptt_truncation_len is not None and self.bptt_truncation_len < 1:
            raise ValueError("bptt_truncation_len must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    cv_frame_accuracy: float
    learning_rate: float


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)

    @property
    def loss_curve(self):
        return [h.train_loss for h in self.history]


def clip_global_norm(grads, max_norm):
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


class SGD:
    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()} if momentum else None

    def step(self, params, grads):
        for k, g in grads.items():
            if self.weight_decay:
                g = g + self.weight_decay * params[k]
            if self.velocity is not None:
                self.velocity[k] = self.momentum * self.velocity[k] - self.lr * g
                params[k] += self.velocity[k]
            else:
                params[k] -= self.lr * g


F32_MAX = float(np.finfo(np.float32).max)


def check_params(params, epoch):
    """Raise if any weight is non-finite or would overflow float32 storage."""
    for k, v in params.items():
        if not np.all(np.abs(v) <= F32_MAX):
            raise NonFiniteParams(epoch, k)


def frame_accuracy_of(model, data):
    """Pooled fraction of frames with (p_whisper >= 0.5) == (label is whisper)."""
    hits = total = 0
    for x, y in data:
        p = model.forward(x)[..., 0]
        hits += int(((p >= 0.5) == (y == 0)).sum())
        total += len(p)
    return hits / total if total else float("nan")


def _prepare(model, features):
    return [(model.prepare(fm.values), label_index(fm.label)) for fm in features]


def _mlp_epoch(model, data, order, cfg, opt, epoch):
    loss_sum = frames = 0.0
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        x = np.concatenate([data[i][0] for i in idx])
        y = np.concatenate([np.full(len(data[i][0]), data[i][1]) for i in idx])
        loss, grads = model.loss_and_grads(x, y)
        if not math.isfinite(loss):
            raise NonFiniteLoss(epoch, b, loss)
        opt.step(model.params, clip_global_norm(grads, cfg.gradient_clip_norm))
        loss_sum += loss * len(x)
        frames += len(x)
    return loss_sum / frames


def _lstm_epoch(model, data, order, cfg, opt, epoch):
    loss_sum = frames = 0.0
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        lengths = np.array([len(data[i][0]) for i in idx])
        T = int(lengths.max())
        x = np.zeros((len(idx), T, model.input_dim))
        for row, i in enumerate(idx):
            x[row, :lengths[row]] = data[i][0]
        y = np.array([data[i][1] for i in idx])
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
        span = cfg.bptt_truncation_len or T
        state = None
        for s in range(0, T, span):
            m = mask[:, s:s + span]
            n = m.sum()
            loss, grads, state = model.loss_and_grads(x[:, s:s + span], y, m / n, state)
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, b, loss)
            opt.step(model.params, clip_global_norm(grads, cfg.gradient_clip_norm))
            loss_sum += loss * n
            frames += n
    return loss_sum / frames


def train(model, train_set, cv_set, cfg=TrainConfig()):
    """Fit *model* on labelled feature matrices with plain SGD.

    The MLP sees frames pooled over ``batch_size`` utterances per step. The
    LSTM sees ``batch_size`` utterances at a time, split into segments of
    ``bptt_truncation_len`` frames; one SGD step per segment, with hidden
    and cell state carried into the next segment of the same utterances.
    The learning rate halves whenever cv frame accuracy fails to improve,
    and the best-on-cv parameters are returned (rounded to float32).

    If the model has no normalizer yet, one is fitted on *train_set*.
    """
    if not cv_set:
        raise EmptySet("cv set is empty")
    if not train_set and cfg.epochs:
        raise EmptySet("train set is empty")
    model = model.copy()
    if model.normalizer is None:
        model.normalizer = Normalizer.fit(train_set)
    rng = np.random.default_rng(cfg.seed)
    train_data = _prepare(model, train_set)
    cv_data = _prepare(model, cv_set)
    opt = SGD(model.params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    run_epoch = _lstm_epoch if isinstance(model, LSTM) else _mlp_epoch

    result = TrainResult(model=model)
    best_acc = -1.0
    best_params = {k: v.copy() for k, v in model.params.items()}
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_data))
        loss = run_epoch(model, train_data, order, cfg, opt, epoch)
        check_params(model.params, epoch)
        acc = frame_accuracy_of(model, cv_data)
        result.history.append(EpochStats(epoch, loss, acc, opt.lr))
        log.info("epoch %d: loss %.5f cv frame acc %.4f lr %g", epoch, loss, acc, opt.lr)
        if acc > best_acc:
            best_acc = acc
            best_params = {k: v.copy() for k, v in model.params.items()}
        elif cfg.halve_on_plateau:
            opt.lr *= 0.5
    if cfg.restore_best and cfg.epochs:
        model.params = best_params
    model.params = {k: f32_exact(v) for k, v in model.params.items()}
    return result


# -- gradient checking -----------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_block: dict

    def __repr__(self):
        return f"GradCheckReport(max_rel_error={self.max_rel_error:.3e})"


def _sequence_loss(model, x, target):
    if isinstance(model, MLP):
        return model.loss_and_grads(x, np.full(len(x), target))
    loss, grads, _ = model.loss_and_grads(x, [target])
    return loss, grads


def gradient_check(model, x_seq, label, epsilon=1e-5, max_params=5000):
    """Compare analytic gradients with central differences for every parameter.

    The loss is the mean frame cross-entropy of the whole sequence (no
    truncation). Relative error per element is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if model.num_params > max_params:
        raise ValueError(f"model has {model.num_params} parameters; limit is {max_params}")
    x = model.prepare(x_seq)
    target = label if isinstance(label, (int, np.integer)) else label_index(label)
    _, analytic = _sequence_loss(model, x, target)
    per_block = {}
    for name, p in model.params.items():
        numeric = np.empty_like(p)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = _sequence_loss(model, x, target)[0]
            flat[i] = orig - epsilon
            down = _sequence_loss(model, x, target)[0]
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * epsilon)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        per_block[name] = float((np.abs(a - numeric) / denom).max())
    return GradCheckReport(max(per_block.values()), per_block)
