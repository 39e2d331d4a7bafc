"""Few-shot, full-finetune and zero-shot evaluation protocols."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..analysis.records import AggregateRecord, ResultRecord, aggregate
from .finetune import FinetuneConfig, cap_training, evaluate, finetune

logger = logging.getLogger(__name__)

SETTINGS = ("few_shot", "full_finetune", "zero_shot")


@dataclass
class Treebank:
    language: str
    train: list = field(default_factory=list)
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)


def carve_dev(tb: Treebank, count: int = 300, seed: int = 0) -> Treebank:
    """Move ``count`` seeded-random train sentences to dev when dev is missing."""
    if tb.dev or not tb.train:
        return tb
    count = min(count, len(tb.train) - 1)
    if count <= 0:
        return tb
    rng = np.random.default_rng(seed)
    picked = set(rng.choice(len(tb.train), size=count, replace=False).tolist())
    dev = [s for i, s in enumerate(tb.train) if i in picked]
    train = [s for i, s in enumerate(tb.train) if i not in picked]
    return Treebank(tb.language, train, dev, list(tb.test))


def few_shot_sample(train, size: int, seed: int):
    """``size`` sentences drawn without replacement (all of them if fewer exist)."""
    if len(train) <= size:
        return list(train)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(train), size=size, replace=False))
    return [train[i] for i in idx]


@dataclass
class SettingResult:
    records: list
    aggregates: list

    def for_language(self, language, task=None):
        return [r for r in self.records
                if r.language == language and (task is None or r.task == task)]


def run_setting(setting, encoder, tokenizer, inventory, config: FinetuneConfig,
                tasks=("pos", "uas"), lapt_steps=0, vocab_size=0, alpha=0.0,
                on_result=None) -> SettingResult:
    """Fine-tune and score one evaluation setting over every configured seed.

    ``inventory`` maps language codes to ``Treebank``. Returns one
    ``ResultRecord`` per (language, task, seed) plus mean/sd aggregates.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    banks = {code: carve_dev(tb, config.dev_carve) for code, tb in inventory.items()}
    trainable = [c for c, tb in banks.items() if tb.train]
    test_only = [c for c, tb in banks.items() if not tb.train and tb.test]
    meta = dict(lapt_steps=lapt_steps, vocab_size=vocab_size, alpha=alpha)
    records = []

    def emit(rec):
        records.append(rec)
        if on_result is not None:
            on_result(rec)

    if setting == "zero_shot":
        if not trainable:
            raise ValueError("zero-shot needs at least one language with a train split")
        if not test_only:
            logger.warning("zero-shot: no test-only languages to evaluate")
        ft = config.replace(patience_epochs=config.full_patience_epochs)
        train = [s for c in trainable for s in cap_training(banks[c].train, config.train_cap)]
        dev = [s for c in trainable for s in banks[c].dev]
        for task in tasks:
            for seed in config.seeds:
                res = finetune(task, encoder, tokenizer, train, dev, ft, seed)
                for code in test_only:
                    score = evaluate(res.model, banks[code].test, task)
                    emit(ResultRecord(code, task, setting, finetuning_lines=len(train),
                                      seed=seed, score=score, **meta))
    else:
        if setting == "few_shot":
            ft = config.replace(patience_epochs=None)
        else:
            ft = config.replace(patience_epochs=config.full_patience_epochs)
        for code in trainable:
            tb = banks[code]
            if not tb.test:
                logger.warning("%s has no test split; skipped", code)
                continue
            for task in tasks:
                for seed in config.seeds:
                    if setting == "few_shot":
                        train = few_shot_sample(tb.train, config.few_shot_size, seed)
                        if len(train) < config.few_shot_size:
                            logger.info("%s: only %d few-shot sentences", code, len(train))
                    else:
                        train = cap_training(tb.train, config.train_cap)
                    res = finetune(task, encoder, tokenizer, train, tb.dev, ft, seed)
                    score = evaluate(res.model, tb.test, task)
                    emit(ResultRecord(code, task, setting, finetuning_lines=len(train),
                                      seed=seed, score=score, **meta))
    return SettingResult(records, aggregate(records))


__all__ = [
    "AggregateRecord",
    "SettingResult",
    "Treebank",
    "carve_dev",
    "few_shot_sample",
    "run_setting",
]
