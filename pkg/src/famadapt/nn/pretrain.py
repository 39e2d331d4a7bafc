"""Masked-language-model pretraining with an embedding-only warm-up window."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .checkpoint import EncoderCheckpoint
from .encoder import Encoder, is_block_param
from .optim import Adam, NonFiniteLossError, clip_grad_norm, gradient, linear_lr

logger = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    total_steps: int = 100_000
    freeze_steps: int = 10_000
    mask_prob: float = 0.15
    learning_rate: float = 1e-5
    schedule: str = "linear"
    batch_size: int = 200
    max_grad_norm: float = 1.0
    max_sequence_length: int = 256
    dev_eval_interval: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if not 0 <= self.freeze_steps <= self.total_steps:
            raise ValueError(
                f"freeze_steps {self.freeze_steps} must lie in [0, total_steps={self.total_steps}]"
            )
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError(f"mask_prob {self.mask_prob} outside [0, 1]")
        if self.schedule not in ("linear", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    @property
    def eval_interval(self):
        if self.dev_eval_interval:
            return self.dev_eval_interval
        return max(self.total_steps // 50, 100)

    def lr_at(self, step):
        if self.schedule == "constant":
            return self.learning_rate
        return linear_lr(step, self.learning_rate, self.total_steps)

    def to_dict(self):
        return asdict(self)


def mlm_mask(ids, special_mask, mask_prob, rng, mask_id, content_ids):
    """Corrupt a batch for MLM.

    Every position where ``special_mask`` is False is selected independently
    with ``mask_prob``. Selected positions become ``mask_id`` (80%), a
    uniformly drawn id from ``content_ids`` (10%) or stay unchanged (10%).

    Returns ``(corrupted, labels)`` where ``labels`` holds the original id at
    selected positions and -1 elsewhere.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids = np.asarray(ids)
    special_mask = np.asarray(special_mask, dtype=bool)
    selected = (rng.random(ids.shape) < mask_prob) & ~special_mask
    roll = rng.random(ids.shape)
    replacement = np.asarray(content_ids)[rng.integers(0, len(content_ids), size=ids.shape)]
    corrupted = ids.copy()
    corrupted[selected & (roll < 0.8)] = mask_id
    use_random = selected & (roll >= 0.8) & (roll < 0.9)
    corrupted[use_random] = replacement[use_random]
    labels = np.where(selected, ids, -1)
    return corrupted, labels


def pad_batch(sequences, pad_id, dtype=np.int64):
    width = max(len(s) for s in sequences)
    ids = np.full((len(sequences), width), pad_id, dtype=dtype)
    mask = np.zeros((len(sequences), width), dtype=bool)
    for i, s in enumerate(sequences):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


def encode_lines(tokenizer, lines, max_len):
    out = []
    for line in lines:
        ids = tokenizer.encode(line, add_special=True)
        if len(ids) > max_len:
            ids = ids[: max_len - 1] + [tokenizer.eos_id]
        out.append(ids)
    return out


def mlm_loss(encoder: Encoder, corrupted, pad_mask, labels):
    hidden = encoder.forward(corrupted, pad_mask)
    rows, cols = np.nonzero(labels >= 0)
    picked = ad.gather(hidden, (rows, cols))
    logits = encoder.mlm_logits(picked)
    return ad.cross_entropy(logits, labels[rows, cols])


class MaskedDevSet:
    """Dev sequences corrupted once with a fixed seed so every evaluation
    scores the same positions."""

    def __init__(self, tokenizer, lines, config: PretrainConfig, seed=12345, chunk=64):
        if not lines:
            raise ValueError("dev set is empty")
        seqs = encode_lines(tokenizer, lines, config.max_sequence_length)
        rng = np.random.default_rng(seed)
        self.chunks = []
        for start in range(0, len(seqs), chunk):
            ids, mask = pad_batch(seqs[start:start + chunk], tokenizer.pad_id)
            special = np.isin(ids, tokenizer.special_ids) | ~mask
            corrupted, labels = mlm_mask(
                ids, special, config.mask_prob, rng, tokenizer.mask_id, tokenizer.content_ids
            )
            if (labels >= 0).any():
                self.chunks.append((corrupted, mask, labels))
        if not self.chunks:
            raise ValueError("dev set produced no masked positions")

    def loss(self, encoder):
        total, count = 0.0, 0
        with ad.no_grad():
            for corrupted, mask, labels in self.chunks:
                n = int((labels >= 0).sum())
                total += float(mlm_loss(encoder, corrupted, mask, labels).data) * n
                count += n
        return total / count


@dataclass
class PretrainResult:
    best: EncoderCheckpoint
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)  # (step, loss)
    lr: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)

    def trajectory_rows(self):
        dev = dict(self.dev_loss)
        for step, loss in enumerate(self.train_loss):
            yield step, loss, self.lr[step], self.grad_norm[step], dev.get(step)
        if len(self.train_loss) in dev:
            step = len(self.train_loss)
            yield step, None, None, None, dev[step]


class TrainingDiverged(RuntimeError):
    def __init__(self, step, last_good: EncoderCheckpoint, cause):
        self.step = step
        self.last_good = last_good
        super().__init__(f"training diverged at step {step}: {cause}")


def pretrain(encoder: Encoder, stream, config: PretrainConfig, dev_lines, tokenizer,
             on_step=None) -> PretrainResult:
    """Run MLM training and return the lowest-dev-loss checkpoint.

    ``stream`` yields text lines indefinitely. Steps ``< freeze_steps``
    update only the token embeddings and MLM head; later steps update all
    parameters. The learning rate follows ``config.lr_at(step)``.
    """
    rng = np.random.default_rng(config.seed)
    dev = MaskedDevSet(tokenizer, dev_lines, config)
    optimizer = Adam(encoder.params)
    all_names = list(encoder.params)
    warm_names = [n for n in all_names if not is_block_param(n)]
    stream = iter(stream)

    result = PretrainResult(best=None)

    def snapshot(step, loss):
        return EncoderCheckpoint.from_encoder(
            encoder, step=step, dev_loss=loss, optimizer=optimizer.state()
        )

    def evaluate(step):
        loss = dev.loss(encoder)
        if not math.isfinite(loss):
            raise TrainingDiverged(step, result.best, f"dev loss {loss}")
        result.dev_loss.append((step, loss))
        if result.best is None or loss < result.best.dev_loss:
            result.best = snapshot(step, loss)
        logger.info("step %d dev_loss %.4f", step, loss)
        return loss

    evaluate(0)
    interval = config.eval_interval
    for step in range(config.total_steps):
        lines = [next(stream) for _ in range(config.batch_size)]
        ids, mask = pad_batch(encode_lines(tokenizer, lines, config.max_sequence_length),
                              tokenizer.pad_id)
        special = np.isin(ids, tokenizer.special_ids) | ~mask
        corrupted, labels = mlm_mask(ids, special, config.mask_prob, rng,
                                     tokenizer.mask_id, tokenizer.content_ids)
        names = warm_names if step < config.freeze_steps else all_names
        lr = config.lr_at(step)
        if not (labels >= 0).any():
            result.train_loss.append(float("nan"))
            result.lr.append(lr)
            result.grad_norm.append(0.0)
        else:
            try:
                loss, grads = gradient(
                    encoder.params,
                    lambda: mlm_loss(encoder, corrupted, mask, labels),
                    context=f"step {step}",
                )
            except NonFiniteLossError as exc:
                raise TrainingDiverged(step, result.best, exc) from exc
            grads = {n: grads[n] for n in names}
            norm = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads, lr, names)
            result.train_loss.append(loss)
            result.lr.append(lr)
            result.grad_norm.append(norm)
        if on_step is not None:
            on_step(step, encoder)
        done = step + 1
        if done % interval == 0 or done == config.total_steps:
            evaluate(done)
    return result
