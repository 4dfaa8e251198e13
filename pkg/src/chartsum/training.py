"""Adam training loop with seeded shuffling and divergence checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import FeatureVocab, TrainingExample
from .model import Batch, DivergenceError, Model, TrainConfig, collate


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    token_loss: float
    cs_loss: float
    val_loss: float | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "token_loss": self.token_loss,
            "cs_loss": self.cs_loss,
            "val_loss": self.val_loss,
        }


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": [e.to_dict() for e in self.epochs]}


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            params[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class _BatchSampler:
    """Cycles over seeded shuffles of the example indices."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next_indices(self) -> list[int]:
        out: list[int] = []
        while len(out) < self.batch_size:
            if self.pos >= self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out


def evaluate_loss(
    model: Model,
    examples: list[TrainingExample],
    header_vocab: FeatureVocab,
    value_vocab: FeatureVocab,
    batch_size: int = 16,
) -> float:
    total, count = 0.0, 0
    for i in range(0, len(examples), batch_size):
        batch = collate(examples[i:i + batch_size], header_vocab, value_vocab, dtype=model.dtype)
        logits, cs_probs, _ = model.forward(batch, train=False)
        loss, _, _ = model.loss_parts(logits, cs_probs, batch)
        total += loss * batch.size
        count += batch.size
    return total / count


def train(
    model: Model,
    examples: list[TrainingExample],
    tc: TrainConfig,
    header_vocab: FeatureVocab,
    value_vocab: FeatureVocab,
    val_examples: list[TrainingExample] | None = None,
    log=None,
) -> tuple[Model, TrainHistory]:
    """Runs epochs x updates_per_epoch Adam steps. Deterministic for a fixed
    seed; aborts with the failing epoch/step on NaN."""
    if not examples:
        raise ValueError("training corpus is empty")
    tc.validate()
    rng = np.random.default_rng(tc.seed)
    drop_rng = np.random.default_rng(tc.seed + 1)
    sampler = _BatchSampler(len(examples), tc.batch_size, rng)
    opt = Adam(model.params, lr=tc.learning_rate)
    history = TrainHistory()

    for epoch in range(tc.epochs):
        sum_loss = sum_ce = sum_bce = 0.0
        for step in range(tc.updates_per_epoch):
            idx = sampler.next_indices()
            batch = collate([examples[i] for i in idx], header_vocab, value_vocab, dtype=model.dtype)
            try:
                loss, (ce, bce), grads = model.loss_and_grads(batch, train=True, rng=drop_rng)
            except DivergenceError as e:
                raise DivergenceError(f"epoch {epoch} step {step}: {e}") from e
            clip_gradients(grads, tc.grad_clip)
            opt.step(model.params, grads)
            model.check_finite()
            sum_loss += loss
            sum_ce += ce
            sum_bce += bce
        stats = EpochStats(
            epoch=epoch,
            train_loss=sum_loss / tc.updates_per_epoch,
            token_loss=sum_ce / tc.updates_per_epoch,
            cs_loss=sum_bce / tc.updates_per_epoch,
        )
        if val_examples:
            stats.val_loss = evaluate_loss(model, val_examples, header_vocab, value_vocab)
        history.epochs.append(stats)
        if log is not None:
            log(f"epoch {epoch}: train_loss={stats.train_loss:.4f}"
                + (f" val_loss={stats.val_loss:.4f}" if stats.val_loss is not None else ""))
    return model, history
