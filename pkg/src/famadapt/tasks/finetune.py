"""Fine-tuning the encoder with a POS or arc-scoring head, and scoring."""

from __future__ import annotations

import logging
import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import autodiff as ad
from ..nn.checkpoint import read_tensor_file, write_tensor_file
from ..nn.encoder import Encoder, EncoderConfig
from ..nn.optim import Adam, clip_grad_norm, gradient
from ..subword import SubwordModel
from .conllu import UPOS_TAGS
from .heads import BiaffineHead, TaggerHead

logger = logging.getLogger(__name__)

TASKS = ("pos", "uas")
TRAIN_CAP = 32_768


@dataclass
class FinetuneConfig:
    learning_rate: float = 5e-6
    schedule: str = "constant"
    max_epochs: int = 64
    eval_interval_epochs: int = 2
    patience_epochs: int | None = None
    batch_size: int = 72
    max_grad_norm: float = 1.0
    max_sequence_length: int = 256
    train_cap: int = TRAIN_CAP
    seeds: tuple = (0, 1, 2, 3)
    arc_dim: int = 64
    few_shot_size: int = 512
    dev_carve: int = 300
    full_patience_epochs: int = 8

    def __post_init__(self):
        self.seeds = tuple(self.seeds)
        if self.schedule != "constant":
            raise ValueError("fine-tuning uses a constant learning rate")
        if self.patience_epochs is not None and self.patience_epochs % self.eval_interval_epochs:
            raise ValueError("patience must be a multiple of the evaluation interval")
        if self.max_epochs <= 0 or self.eval_interval_epochs <= 0:
            raise ValueError("max_epochs and eval_interval_epochs must be positive")

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return FinetuneConfig(**data)

    def to_dict(self):
        return asdict(self)


@dataclass
class WordBatch:
    ids: np.ndarray        # (B, T) subword ids
    pad_mask: np.ndarray   # (B, T)
    word_pos: np.ndarray   # (B, N) index of each word's first subword
    word_mask: np.ndarray  # (B, N) word exists and fits in the window
    tags: np.ndarray       # (B, N) tag ids (-1 unknown)
    heads: np.ndarray      # (B, N) gold heads, clipped to fitting words


def encode_sentences(tokenizer: SubwordModel, sentences, max_len, tag_index=None) -> WordBatch:
    seqs, firsts = [], []
    for sent in sentences:
        ids, first = [tokenizer.bos_id], []
        for pieces in tokenizer.encode_words(sent.words):
            first.append(len(ids) if len(ids) + len(pieces) < max_len else -1)
            ids.extend(pieces)
        ids = ids[: max_len - 1] + [tokenizer.eos_id]
        seqs.append(ids)
        firsts.append(first)
    b = len(sentences)
    t = max(len(s) for s in seqs)
    n = max(len(s) for s in sentences)
    batch = WordBatch(
        ids=np.full((b, t), tokenizer.pad_id, dtype=np.int64),
        pad_mask=np.zeros((b, t), dtype=bool),
        word_pos=np.zeros((b, n), dtype=np.int64),
        word_mask=np.zeros((b, n), dtype=bool),
        tags=np.full((b, n), -1, dtype=np.int64),
        heads=np.zeros((b, n), dtype=np.int64),
    )
    for i, (sent, ids, first) in enumerate(zip(sentences, seqs, firsts)):
        batch.ids[i, : len(ids)] = ids
        batch.pad_mask[i, : len(ids)] = True
        for w, pos in enumerate(first):
            if pos < 0:
                continue
            batch.word_pos[i, w] = pos
            batch.word_mask[i, w] = True
            if tag_index is not None:
                batch.tags[i, w] = tag_index.get(sent.upos[w], -1)
            batch.heads[i, w] = sent.heads[w]
        # a head pointing at a truncated word can never be predicted
        fits = np.concatenate([[True], batch.word_mask[i]])
        batch.heads[i] = np.where(fits[batch.heads[i]], batch.heads[i], 0)
    return batch


class TaskModel:
    """Encoder plus one task head, with the tokenizer needed to feed it."""

    def __init__(self, task, encoder: Encoder, head, tokenizer: SubwordModel,
                 tagset=UPOS_TAGS, max_sequence_length=256):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        self.task = task
        self.encoder = encoder
        self.head = head
        self.tokenizer = tokenizer
        self.tagset = tuple(tagset)
        self.tag_index = {t: i for i, t in enumerate(self.tagset)}
        self.max_sequence_length = max_sequence_length

    @classmethod
    def build(cls, task, encoder: Encoder, tokenizer, seed=0, arc_dim=64, tagset=UPOS_TAGS,
              max_sequence_length=256):
        dtype = encoder.dtype
        d = encoder.config.model_dim
        if task == "pos":
            head = TaggerHead.build(d, len(tagset), seed=seed, dtype=dtype)
        else:
            head = BiaffineHead.build(d, arc_dim, seed=seed, dtype=dtype)
        return cls(task, encoder, head, tokenizer, tagset, max_sequence_length)

    @property
    def params(self):
        p = OrderedDict(("encoder." + n, t) for n, t in self.encoder.params.items())
        p.update(("head." + n, t) for n, t in self.head.params.items())
        return p

    def state(self):
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_state(self, state):
        for n, t in self.params.items():
            t.data = np.array(state[n], dtype=t.data.dtype, copy=True)

    def batch(self, sentences) -> WordBatch:
        return encode_sentences(self.tokenizer, sentences, self.max_sequence_length, self.tag_index)

    def word_vectors(self, batch: WordBatch):
        hidden = self.encoder.forward(batch.ids, batch.pad_mask)
        rows = np.arange(batch.ids.shape[0])[:, None]
        return ad.gather(hidden, (np.broadcast_to(rows, batch.word_pos.shape), batch.word_pos))

    def outputs(self, batch: WordBatch):
        words = self.word_vectors(batch)
        if self.task == "pos":
            return self.head.logits(words)
        return ad.swapaxes(self.head.scores(words, batch.word_mask), 1, 2)  # (B, n, n+1)

    def loss(self, batch: WordBatch):
        out = self.outputs(batch)
        if self.task == "pos":
            valid = batch.word_mask & (batch.tags >= 0)
            return ad.cross_entropy(out, np.maximum(batch.tags, 0), valid)
        return ad.cross_entropy(out, batch.heads, batch.word_mask)

    def predict(self, sentences, chunk=64):
        """Per-sentence predictions: tag strings (pos) or head indices (uas).

        Words truncated out of the encoder window are predicted as None.
        """
        preds = []
        with ad.no_grad():
            for start in range(0, len(sentences), chunk):
                part = sentences[start:start + chunk]
                batch = self.batch(part)
                best = self.outputs(batch).data.argmax(axis=-1)
                for i, sent in enumerate(part):
                    row = []
                    for w in range(len(sent)):
                        if not batch.word_mask[i, w]:
                            row.append(None)
                        elif self.task == "pos":
                            row.append(self.tagset[best[i, w]])
                        else:
                            row.append(int(best[i, w]))
                    preds.append(row)
        return preds

    def save(self, path):
        tok = self.tokenizer
        header = {
            "kind": "task_model",
            "task": self.task,
            "encoder_config": self.encoder.config.to_dict(),
            "tagset": list(self.tagset),
            "max_sequence_length": self.max_sequence_length,
            "tokenizer": {"tokens": tok.tokens, "merges": [list(m) for m in tok.merges],
                          "specials": tok.specials, "marker": tok.marker},
        }
        if self.task == "uas":
            header["arc_dim"] = self.head.arc_dim
        write_tensor_file(path, header, self.state())

    @classmethod
    def load(cls, path):
        header, tensors = read_tensor_file(path)
        if header.get("kind") != "task_model":
            raise ValueError(f"{path}: not a task model file")
        t = header["tokenizer"]
        tokenizer = SubwordModel(t["tokens"], t["merges"], t["specials"], t["marker"])
        encoder = Encoder.build(EncoderConfig(**header["encoder_config"]))
        model = cls.build(header["task"], encoder, tokenizer, arc_dim=header.get("arc_dim", 64),
                          tagset=header["tagset"],
                          max_sequence_length=header["max_sequence_length"])
        model.load_state(tensors)
        return model


def evaluate(model, sentences, task) -> float:
    """POS accuracy or UAS, as a percentage.

    ``model`` is anything with ``predict(sentences)``. UAS takes the
    independent per-word argmax head (no tree constraint).
    """
    if not sentences:
        raise ValueError("evaluation needs at least one sentence")
    preds = model.predict(sentences)
    correct = total = 0
    for sent, pred in zip(sentences, preds):
        gold = sent.upos if task == "pos" else sent.heads
        for g, p in zip(gold, pred):
            correct += int(p is not None and p == g)
            total += 1
    return 100.0 * correct / total


@dataclass
class FinetuneResult:
    model: TaskModel
    trajectory: list = field(default_factory=list)   # (epoch, dev score)
    train_loss: list = field(default_factory=list)   # per epoch mean
    best_epoch: int = 0
    epochs_run: int = 0
    train_size: int = 0


def cap_training(sentences, cap=TRAIN_CAP):
    return list(sentences[:cap])


def finetune(task, encoder: Encoder, tokenizer: SubwordModel, train, dev,
             config: FinetuneConfig, seed: int = 0) -> FinetuneResult:
    """Fine-tune a copy of ``encoder`` with a fresh head.

    Evaluates on ``dev`` every ``eval_interval_epochs`` and returns the best
    evaluated state. With ``patience_epochs`` set, stops once that many
    epochs pass without a dev improvement; otherwise runs ``max_epochs``.
    """
    train = cap_training(train, config.train_cap)
    if not train:
        raise ValueError("no training sentences")
    model = TaskModel.build(task, encoder.copy(), tokenizer, seed=seed, arc_dim=config.arc_dim,
                            max_sequence_length=config.max_sequence_length)
    content = [i for s in train for p in tokenizer.encode_words(s.words) for i in p]
    if content and all(i == tokenizer.unk_id for i in content):
        warnings.warn("training set tokenizes entirely to <unk>", stacklevel=2)

    params = model.params
    optimizer = Adam(params)
    rng = np.random.default_rng(seed)
    result = FinetuneResult(model=model, train_size=len(train))
    best_state, best_score = None, -np.inf
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = model.batch([train[i] for i in order[start:start + config.batch_size]])
            if task == "pos" and not (batch.word_mask & (batch.tags >= 0)).any():
                continue
            loss, grads = gradient(params, lambda: model.loss(batch), context=f"epoch {epoch}")
            clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads, config.learning_rate)
            losses.append(loss)
        result.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
        result.epochs_run = epoch
        if epoch % config.eval_interval_epochs == 0 and dev:
            score = evaluate(model, dev, task)
            result.trajectory.append((epoch, score))
            if score > best_score:
                best_score, best_state, result.best_epoch = score, model.state(), epoch
            elif (config.patience_epochs is not None
                  and epoch - result.best_epoch >= config.patience_epochs):
                logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    if best_state is not None:
        model.load_state(best_state)
    else:
        result.best_epoch = result.epochs_run
    return result


def finetune_pos(encoder, tokenizer, train, dev, config, seed=0) -> FinetuneResult:
    return finetune("pos", encoder, tokenizer, train, dev, config, seed)


def finetune_parser(encoder, tokenizer, train, dev, config, seed=0) -> FinetuneResult:
    return finetune("uas", encoder, tokenizer, train, dev, config, seed)
