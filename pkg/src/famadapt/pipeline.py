"""Grid orchestration: corpora, source model, vocabularies, adaptation, evaluation.

Every stage writes its artifact under the run directory and reuses it when
present, so an interrupted grid resumes where it stopped. Results for one
(grid cell, seed) are appended to the records file together, which makes
that pair the unit of resumption.
"""

from __future__ import annotations

import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis.records import RecordsFile, ResultRecord
from .config import RunConfig
from .corpus import LanguageCorpus, clean_corpus, split_corpus, write_splits, write_stats
from .nn.checkpoint import EncoderCheckpoint, load_checkpoint, save_checkpoint
from .nn.encoder import Encoder, EncoderConfig
from .nn.pretrain import PretrainResult, pretrain
from .sampling import (SampledStream, allocate_steps, compute_sampling_weights, corpus_sizes,
                       group_languages, truncate_to_bytes)
from .subword import SubwordModel, train_subword
from .tasks.conllu import load_treebank_dir
from .tasks.protocols import Treebank, run_setting
from .transplant import (EmbeddingMatrix, Vocabulary, compute_overlap, focus_initialize,
                         train_auxiliary_embeddings)

logger = logging.getLogger(__name__)

DTYPE = np.float32
AUX_LINES = 20_000
DEV_LINES_PER_LANGUAGE = 200


def _atomic_write(path: Path, writer):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    writer(tmp)
    os.replace(tmp, path)


def cell_name(steps, vocab, alpha):
    return f"s{steps}-v{vocab}-a{alpha:g}"


def adapt_encoder(base: Encoder, embedding: EmbeddingMatrix, overlap, dtype=DTYPE) -> Encoder:
    """Source encoder with its token table swapped for ``embedding``.

    All non-vocabulary weights are copied. Output-bias entries carry over for
    shared tokens and start at zero for novel ones.
    """
    cfg = EncoderConfig(**{**base.config.to_dict(), "vocab_size": embedding.vectors.shape[0]})
    enc = Encoder.build(cfg, embedding=embedding, dtype=dtype)
    for name, t in base.params.items():
        if name in ("embeddings.token", "mlm.bias"):
            continue
        enc.params[name].data = t.data.astype(dtype, copy=True)
    bias = np.zeros(cfg.vocab_size, dtype=dtype)
    old_bias = base.params["mlm.bias"].data
    for new_id, old_id in overlap.pairs.items():
        bias[new_id] = old_bias[old_id]
    enc.params["mlm.bias"].data = bias
    return enc


def write_trajectory(path, result: PretrainResult):
    def fmt(x):
        return "" if x is None else f"{x:.6g}"

    def w(p):
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("step\ttrain_loss\tlr\tgrad_norm\tdev_loss\n")
            for row in result.trajectory_rows():
                fh.write(f"{row[0]}\t" + "\t".join(fmt(x) for x in row[1:]) + "\n")

    _atomic_write(Path(path), w)


@dataclass
class GridOutcome:
    run_dir: Path
    completed: list = field(default_factory=list)   # (cell, seed) run now
    skipped: list = field(default_factory=list)     # already in the records file
    failed: list = field(default_factory=list)      # (cell, seed, message)

    @property
    def ok(self):
        return not self.failed


class Pipeline:
    def __init__(self, config: RunConfig, run_dir=None):
        self.config = config
        self.run_dir = Path(run_dir) if run_dir is not None else config.run_dir()
        self._corpora = None
        self._treebanks = None
        self._base = None

    # ---------------------------------------------------------- corpora

    def corpora(self) -> dict:
        """Cleaned, split corpora per language (cached as text files)."""
        if self._corpora is not None:
            return self._corpora
        out_dir = self.run_dir / "corpus"
        done = out_dir / "stats.tsv"
        corpora = {}
        if done.exists():
            for lang in self.config.languages:
                if not lang.text:
                    continue
                labels, lines = [], []
                for split in ("train", "dev", "test"):
                    path = out_dir / f"{lang.code}.{split}.txt"
                    part = path.read_text(encoding="utf-8").splitlines() if path.exists() else []
                    labels.extend([split] * len(part))
                    lines.extend(part)
                corpora[lang.code] = LanguageCorpus(lang.code, lines, labels, lang.text)
        else:
            stats = {}
            for lang in self.config.languages:
                if not lang.text:
                    continue
                corpus, st = clean_corpus(lang.text, lang.code, self.config.cleaning)
                corpus = split_corpus(corpus, self.config.dev_frac, self.config.test_frac,
                                      self.config.split_seed)
                write_splits(corpus, out_dir)
                corpora[lang.code] = corpus
                stats[lang.code] = st
            _atomic_write(done, lambda p: write_stats(p, stats))
        self._corpora = corpora
        return corpora

    def train_lines(self) -> dict:
        out = {}
        for code, corpus in self.corpora().items():
            lines = corpus.split("train")
            cap = self.config.language(code).byte_cap
            if cap is not None:
                lines = truncate_to_bytes(lines, cap)
            if lines:
                out[code] = lines
        return out

    def dev_lines(self, codes=None) -> list:
        out = []
        for code, corpus in sorted(self.corpora().items()):
            if codes is None or code in codes:
                out.extend(corpus.split("dev")[:DEV_LINES_PER_LANGUAGE])
        return out

    def weights(self, alpha, corpora=None):
        corpora = corpora if corpora is not None else self.train_lines()
        sizes = corpus_sizes(corpora, self.config.sample_measure)
        groups = {g: [m for m in ms if m in corpora] for g, ms in self.config.groups.items()}
        groups = {g: ms for g, ms in groups.items() if ms}
        return compute_sampling_weights(group_languages(sizes, groups), alpha), groups

    def stream(self, alpha, seed=0, corpora=None) -> SampledStream:
        corpora = corpora if corpora is not None else self.train_lines()
        weights, groups = self.weights(alpha, corpora)
        return SampledStream(corpora, weights, seed=seed, groups=groups)

    def treebanks(self) -> dict:
        if self._treebanks is None:
            banks = {}
            for lang in self.config.languages:
                if lang.treebank:
                    splits = load_treebank_dir(lang.treebank, lang.code)
                    banks[lang.code] = Treebank(lang.code, splits["train"], splits["dev"],
                                                splits["test"])
            self._treebanks = banks
        return self._treebanks

    # ---------------------------------------------------------- models

    def _encoder_config(self, vocab_size):
        return EncoderConfig(vocab_size=vocab_size, **self.config.encoder)

    def base_model(self):
        """Tokenizer and encoder standing in for the pre-trained source model."""
        if self._base is not None:
            return self._base
        d = self.run_dir / "base"
        tok_path, ckpt_path = d / "tokenizer.txt", d / "encoder.ckpt"
        if tok_path.exists() and ckpt_path.exists():
            self._base = (SubwordModel.load(tok_path), load_checkpoint(ckpt_path).to_encoder(DTYPE))
            return self._base
        corpora = {c: ls for c, ls in self.train_lines().items()
                   if c in self.config.base_languages}
        if not corpora:
            raise ValueError("source model has no training text")
        text = [line for c in sorted(corpora) for line in corpora[c]]
        tok = train_subword(text, self.config.base_vocab_size)
        enc = Encoder.build(self._encoder_config(tok.vocab_size), seed=0, dtype=DTYPE)
        if self.config.base_steps > 0:
            cfg = self.config.pretrain_config(self.config.base_steps)
            cfg.freeze_steps = 0
            result = pretrain(enc, self.stream(1.0, seed=0, corpora=corpora), cfg,
                              self.dev_lines(corpora), tok)
            enc = result.best.to_encoder(DTYPE)
            write_trajectory(d / "trajectory.tsv", result)
        _atomic_write(tok_path, tok.save)
        _atomic_write(ckpt_path, lambda p: save_checkpoint(p, EncoderCheckpoint.from_encoder(enc)))
        self._base = (tok, enc)
        return self._base

    def vocabulary(self, vocab_size, corpora=None, tag=None):
        """New tokenizer and FOCUS-initialized embedding table for ``vocab_size``."""
        d = self.run_dir / "vocab" / (tag or f"v{vocab_size}")
        tok_path, emb_path = d / "tokenizer.txt", d / "embeddings.vec"
        base_tok, base_enc = self.base_model()
        old_vocab = Vocabulary.from_subword(base_tok)
        if tok_path.exists() and emb_path.exists():
            tok = SubwordModel.load(tok_path)
            return tok, EmbeddingMatrix.load(emb_path), compute_overlap(
                old_vocab, Vocabulary.from_subword(tok))
        corpora = corpora if corpora is not None else self.train_lines()
        total = sum(len(v) for v in corpora.values())
        n = min(self.config.vocab_lines, total)
        sample = self.stream(self.config.vocab_alpha, seed=0, corpora=corpora).take(n)
        tok = train_subword(sample, vocab_size)
        overlap = compute_overlap(old_vocab, Vocabulary.from_subword(tok))
        aux = train_auxiliary_embeddings(sample[:AUX_LINES], tok, self.config.aux_dim)
        old = EmbeddingMatrix(base_tok.tokens, base_enc.params["embeddings.token"].data)
        emb = focus_initialize(old, overlap, tok.tokens, aux, k=self.config.focus_k)
        _atomic_write(tok_path, tok.save)
        _atomic_write(emb_path, emb.save)
        return tok, emb, overlap

    def lapt(self, steps, vocab_size, alpha, corpora=None, tag=None, keep_vocab=False):
        """Adapted encoder for one grid cell (best dev-loss checkpoint).

        ``keep_vocab`` continues training the source model with its own
        vocabulary instead of a transplanted one.
        """
        d = self.run_dir / "lapt" / (tag or cell_name(steps, vocab_size, alpha))
        ckpt_path = d / "best.ckpt"
        if keep_vocab:
            tok, base = self.base_model()
            init = base.copy()
        else:
            vocab_tag = None if corpora is None else f"{tag}-v{vocab_size}"
            tok, emb, overlap = self.vocabulary(vocab_size, corpora, vocab_tag)
            init = None
        if ckpt_path.exists():
            return tok, load_checkpoint(ckpt_path).to_encoder(DTYPE)
        if init is None:
            init = adapt_encoder(self.base_model()[1], emb, overlap)
        corpora = corpora if corpora is not None else self.train_lines()
        result = pretrain(init, self.stream(alpha, seed=0, corpora=corpora),
                          self.config.pretrain_config(steps), self.dev_lines(corpora), tok)
        write_trajectory(d / "trajectory.tsv", result)
        _atomic_write(ckpt_path, lambda p: save_checkpoint(p, result.best))
        return tok, result.best.to_encoder(DTYPE)

    # ---------------------------------------------------------- evaluation

    def evaluate(self, encoder, tokenizer, seed, steps, vocab_size, alpha, languages=None):
        records = []
        ft = self.config.finetuning.replace(seeds=(seed,))
        banks = self.treebanks()
        for setting in self.config.settings:
            trainable = [c for c, tb in banks.items() if tb.train]
            if setting == "zero_shot" and not trainable:
                continue
            result = run_setting(setting, encoder, tokenizer, banks, ft, tuple(self.config.tasks),
                                 lapt_steps=steps, vocab_size=vocab_size, alpha=float(alpha))
            records.extend(r for r in result.records
                           if languages is None or r.language in languages)
        return records

    def run_cell(self, steps, vocab_size, alpha, seed):
        tok, enc = self.lapt(steps, vocab_size, alpha)
        return self.evaluate(enc, tok, seed, steps, vocab_size, alpha)

    # ---------------------------------------------------------- grid

    @property
    def records_path(self):
        return self.run_dir / "records.tsv"

    def completed(self, path=None):
        path = path or self.records_path
        return {(r.lapt_steps, r.vocab_size, r.alpha, r.seed) for r in RecordsFile(path).read()}

    def jobs(self):
        return [(s, v, float(a), seed) for (s, v, a) in self.config.grid.cells()
                for seed in self.config.grid.seeds]

    def run_grid(self, workers=None) -> GridOutcome:
        workers = workers or self.config.workers
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.corpora()
        self.base_model()
        outcome = GridOutcome(self.run_dir)
        done = self.completed()
        todo = []
        for job in self.jobs():
            (outcome.skipped if job in done else todo).append(job)
        records_file = RecordsFile(self.records_path)
        failures = self.run_dir / "failures.tsv"

        def finish(job, result):
            if isinstance(result, BaseException) or isinstance(result, str):
                msg = result if isinstance(result, str) else f"{type(result).__name__}: {result}"
                outcome.failed.append((job, msg))
                with open(failures, "a", encoding="utf-8") as fh:
                    fh.write("\t".join(map(str, job)) + "\t" + msg.replace("\n", " ") + "\n")
                logger.error("cell %s failed: %s", job, msg)
            else:
                records_file.append(result)
                outcome.completed.append(job)

        if workers <= 1:
            for job in todo:
                finish(job, _guarded(self.run_cell, *job))
        else:
            cells = sorted({job[:3] for job in todo})
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for cell, err in zip(cells, pool.map(_lapt_job, [(self.config, self.run_dir, c)
                                                                  for c in cells])):
                    if err:
                        logger.error("adaptation for %s failed: %s", cell, err)
                results = pool.map(_cell_job, [(self.config, self.run_dir, j) for j in todo])
                for job, result in zip(todo, results):
                    finish(job, result)
        return outcome

    def run_baselines(self) -> dict:
        """Evaluate the configured baselines; returns {name: records path}."""
        written = {}
        base_tok, base_enc = self.base_model()
        seeds = self.config.grid.seeds
        out = self.run_dir / "baselines"
        for name in self.config.baselines:
            path = out / f"{name}.records.tsv"
            done = self.completed(path)
            rf = RecordsFile(path)
            if name == "off_the_shelf":
                for seed in seeds:
                    if (0, base_tok.vocab_size, 0.0, seed) not in done:
                        rf.append(self.evaluate(base_enc, base_tok, seed, 0,
                                                base_tok.vocab_size, 0.0))
            elif name == "lapt_only":
                for steps in self.config.grid.lapt_steps:
                    for alpha in self.config.grid.alpha:
                        tag = f"lapt_only-{cell_name(steps, base_tok.vocab_size, alpha)}"
                        tok, enc = self.lapt(steps, base_tok.vocab_size, alpha, tag=tag,
                                             keep_vocab=True)
                        for seed in seeds:
                            if (steps, base_tok.vocab_size, float(alpha), seed) not in done:
                                rf.append(self.evaluate(enc, tok, seed, steps,
                                                        base_tok.vocab_size, alpha))
            elif name == "monolingual":
                self._monolingual(rf, done)
            written[name] = path
        return written

    def _monolingual(self, rf, done, alpha=0.1):
        """One model per sampling unit, sharing the largest step budget by alpha weights."""
        corpora = self.train_lines()
        budget = max(self.config.grid.lapt_steps)
        vocab = min(self.config.grid.vocab_size)
        weights, groups = self.weights(alpha)
        banks = self.treebanks()
        for unit, steps in sorted(allocate_steps(budget, weights).items()):
            members = groups.get(unit, [unit])
            evaluated = {m for m in members if m in banks}
            if steps <= 0 or not evaluated:
                continue
            tok, enc = self.lapt(steps, vocab, alpha, corpora={m: corpora[m] for m in members},
                                 tag=f"mono-{unit}")
            for seed in self.config.grid.seeds:
                if (steps, vocab, alpha, seed) in done:
                    continue
                rf.append(self.evaluate(enc, tok, seed, steps, vocab, alpha, languages=evaluated))


def _guarded(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # a failed cell must not stop the grid
        logger.debug("%s", traceback.format_exc())
        return exc


def _lapt_job(args):
    config, run_dir, (steps, vocab, alpha) = args
    try:
        Pipeline(config, run_dir).lapt(steps, vocab, alpha)
        return None
    except Exception as exc:
        return f"{type(exc).__name__}: {exc}"


def _cell_job(args):
    config, run_dir, job = args
    result = _guarded(Pipeline(config, run_dir).run_cell, *job)
    if isinstance(result, BaseException):
        return f"{type(result).__name__}: {result}"
    return result


def read_grid_records(run_dir) -> list[ResultRecord]:
    return RecordsFile(Path(run_dir) / "records.tsv").read()
