"""Command-line entry point: ``famadapt <subcommand> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import cost as costmod
from .analysis.lmm import (FINETUNED_FORMULA, HIGH_RESOURCE, LmmConvergenceError,
                           RankDeficientDesign, fit_lmm)
from .analysis.records import RecordsFile, SchemaMismatch, read_records
from .analysis.report import PARAMETERS, emit_report, format_marginal, marginalize
from .config import OUTPUT_ROOT_ENV, PROFILES, ConfigError, load_config
from .corpus import CleaningConfig, clean_corpus, split_corpus, write_splits, write_stats
from .nn.checkpoint import (CheckpointFormatError, EncoderCheckpoint, load_checkpoint,
                            save_checkpoint)
from .nn.encoder import Encoder, EncoderConfig
from .nn.optim import NonFiniteLossError
from .nn.pretrain import PretrainConfig, TrainingDiverged, pretrain
from .pipeline import Pipeline, adapt_encoder, write_trajectory
from .sampling import (SampledStream, compute_sampling_weights, corpus_sizes, group_languages,
                       weights_table, write_weights_table)
from .subword import SubwordModel, diagnostics, train_subword, write_diagnostics
from .tasks.conllu import ConllUParseError, read_conllu
from .tasks.finetune import FinetuneConfig, TaskModel, evaluate, finetune
from .transplant import (EmbeddingMatrix, Vocabulary, compute_overlap, focus_initialize,
                         train_auxiliary_embeddings)

logger = logging.getLogger("famadapt")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4
EXIT_PARTIAL = 5


class CliError(Exception):
    def __init__(self, category, message, code):
        self.category = category
        self.code = code
        super().__init__(message)


def _categorize(exc):
    if isinstance(exc, CliError):
        return exc.category, exc.code
    if isinstance(exc, ConfigError):
        return "config", EXIT_USAGE
    if isinstance(exc, (TrainingDiverged, NonFiniteLossError, LmmConvergenceError)):
        return "numerical", EXIT_NUMERIC
    if isinstance(exc, (OSError, ConllUParseError, CheckpointFormatError, SchemaMismatch,
                        UnicodeDecodeError)):
        return "input", EXIT_INPUT
    if isinstance(exc, (ValueError, KeyError, RankDeficientDesign)):
        return "invalid", EXIT_INPUT
    return "internal", EXIT_ERROR


# ---------------------------------------------------------------- helpers

def _read_lines(paths):
    lines = []
    for p in paths:
        lines.extend(l for l in Path(p).read_text(encoding="utf-8").splitlines() if l.strip())
    return lines


def _parse_kv(items, cast=str):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CliError("usage", f"expected key=value, got {item!r}", EXIT_USAGE)
        k, v = item.split("=", 1)
        out[k] = cast(v)
    return out


def _parse_groups(items):
    return {k: v.split(",") for k, v in _parse_kv(items).items()}


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _out_dir(args) -> Path:
    """``--out`` or ``<output root>/<command>-<hash of arguments>``."""
    if getattr(args, "out", None):
        path = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV) or args.output_root)
        relevant = {k: v for k, v in vars(args).items()
                    if k not in ("func", "out", "output_root", "verbose")}
        stamp = hashlib.sha256(json.dumps(relevant, sort_keys=True, default=str).encode())
        path = root / f"{args.command}-{stamp.hexdigest()[:12]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _corpus_dir_lines(directory, split="train"):
    out = {}
    for path in sorted(Path(directory).glob(f"*.{split}.txt")):
        code = path.name[: -len(f".{split}.txt")]
        lines = _read_lines([path])
        if lines:
            out[code] = lines
    if not out:
        raise CliError("input", f"no *.{split}.txt files with text in {directory}", EXIT_INPUT)
    return out


def _profile(name):
    return PROFILES[name]


def _finetune_config(args) -> FinetuneConfig:
    opts = dict(_profile(args.profile)["finetuning"])
    if args.learning_rate is not None:
        opts["learning_rate"] = args.learning_rate
    if args.max_epochs is not None:
        opts["max_epochs"] = args.max_epochs
    if args.patience is not None:
        opts["patience_epochs"] = args.patience
    return FinetuneConfig(**opts)


def _emit(text, args, name, out=None):
    out = out or _out_dir(args)
    path = out / name
    path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    logger.info("wrote %s", path)
    return path


# ---------------------------------------------------------------- commands

def cmd_clean(args):
    cfg = CleaningConfig(**_parse_kv(args.set, float)) if args.set else CleaningConfig()
    out = _out_dir(args)
    corpus, stats = clean_corpus(args.inputs, args.language, cfg)
    corpus = split_corpus(corpus, args.dev_frac, args.test_frac, args.seed)
    paths = write_splits(corpus, out)
    write_stats(out / f"{args.language}.stats.tsv", {args.language: stats})
    if not stats.balanced():
        raise CliError("internal", "cleaning counts do not balance", EXIT_ERROR)
    print(f"{args.language}: in={stats.lines_in} kept={stats.lines_kept} "
          f"duplicates={stats.duplicates_removed} rejected={dict(stats.rejections)}")
    for split, p in paths.items():
        print(f"{split}\t{p}")


def cmd_sample(args):
    corpora = _corpus_dir_lines(args.corpus_dir)
    groups = _parse_groups(args.group)
    caps = _parse_kv(args.cap, int)
    out = _out_dir(args)
    sizes = corpus_sizes(corpora, args.measure)
    if caps and args.measure != "bytes":
        raise CliError("usage", "--cap applies to byte sizes; use --measure bytes", EXIT_USAGE)
    rows = weights_table(sizes, args.alpha, caps, groups)
    write_weights_table(out / "weights.tsv", rows)
    for row in rows:
        print("\t".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in row.items()))
    if args.lines:
        units = group_languages(sizes, groups)
        weights = compute_sampling_weights(units, args.alpha[0])
        stream = SampledStream(corpora, weights, seed=args.seed, groups=groups)
        drawn = stream.take(args.lines, with_units=True)
        with open(out / "sample.tsv", "w", encoding="utf-8") as fh:
            for unit, line in drawn:
                fh.write(f"{unit}\t{line}\n")
        print(f"wrote {len(drawn)} sampled lines to {out / 'sample.tsv'}")


def cmd_train_vocab(args):
    if args.corpus_dir:
        corpora = _corpus_dir_lines(args.corpus_dir)
        groups = _parse_groups(args.group)
        weights = compute_sampling_weights(group_languages(corpus_sizes(corpora), groups),
                                           args.alpha)
        total = sum(len(v) for v in corpora.values())
        lines = SampledStream(corpora, weights, seed=args.seed, groups=groups).take(
            min(args.max_lines, total))
    else:
        lines = _read_lines(args.inputs)
    model = train_subword(lines, args.vocab_size, max_lines=args.max_lines)
    out = _out_dir(args)
    model.save(out / "tokenizer.txt")
    print(f"{model!r} -> {out / 'tokenizer.txt'}")


def cmd_transplant(args):
    old_tok = SubwordModel.load(args.old_tokenizer)
    new_tok = SubwordModel.load(args.new_tokenizer)
    base = load_checkpoint(args.old_checkpoint).to_encoder(np.float32)
    old = EmbeddingMatrix(old_tok.tokens, base.params["embeddings.token"].data)
    overlap = compute_overlap(Vocabulary.from_subword(old_tok), Vocabulary.from_subword(new_tok))
    aux = train_auxiliary_embeddings(_read_lines(args.text), new_tok, args.aux_dim, args.window)
    emb, report = focus_initialize(old, overlap, new_tok.tokens, aux, k=args.k, seed=args.seed,
                                   return_report=True)
    out = _out_dir(args)
    emb.save(out / "embeddings.vec")
    enc = adapt_encoder(base, emb, overlap)
    save_checkpoint(out / "encoder.ckpt", EncoderCheckpoint.from_encoder(enc))
    print(f"copied={report.copied} combined={report.combined} fallback={report.fallback}")
    print(f"wrote {out / 'embeddings.vec'} and {out / 'encoder.ckpt'}")


def cmd_pretrain(args):
    tok = SubwordModel.load(args.tokenizer)
    corpora = _corpus_dir_lines(args.corpus_dir)
    dev = [l for ls in _corpus_dir_lines(args.corpus_dir, "dev").values() for l in ls]
    prof = _profile(args.profile)
    if args.init:
        enc = load_checkpoint(args.init).to_encoder(np.float32)
        if enc.config.vocab_size != tok.vocab_size:
            raise CliError("invalid", "checkpoint vocabulary does not match the tokenizer",
                           EXIT_INPUT)
    else:
        enc = Encoder.build(EncoderConfig(vocab_size=tok.vocab_size, **prof["encoder"]),
                            seed=args.seed, dtype=np.float32)
    opts = dict(prof["pretraining"])
    for key in ("learning_rate", "batch_size", "freeze_steps"):
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    opts["freeze_steps"] = min(opts["freeze_steps"], args.steps)
    cfg = PretrainConfig(total_steps=args.steps, seed=args.seed, **opts)
    groups = _parse_groups(args.group)
    weights = compute_sampling_weights(group_languages(corpus_sizes(corpora), groups), args.alpha)
    result = pretrain(enc, SampledStream(corpora, weights, seed=args.seed, groups=groups), cfg,
                      dev, tok)
    out = _out_dir(args)
    save_checkpoint(out / "best.ckpt", result.best)
    write_trajectory(out / "trajectory.tsv", result)
    first, best = result.dev_loss[0][1], result.best.dev_loss
    print(f"dev loss {first:.4f} -> {best:.4f} (best at step {result.best.step})")


def _sentences(paths):
    out = []
    for p in paths:
        out.extend(read_conllu(p))
    return out


def cmd_finetune(args):
    tok = SubwordModel.load(args.tokenizer)
    enc = load_checkpoint(args.checkpoint).to_encoder(np.float32)
    cfg = _finetune_config(args)
    result = finetune(args.task, enc, tok, _sentences(args.train),
                      _sentences(args.dev) if args.dev else [], cfg, args.seed)
    out = _out_dir(args)
    result.model.save(out / "model.bin")
    for epoch, score in result.trajectory:
        print(f"epoch {epoch}\tdev {score:.2f}")
    print(f"best epoch {result.best_epoch}; wrote {out / 'model.bin'}")


def cmd_evaluate(args):
    model = TaskModel.load(args.model)
    score = evaluate(model, _sentences(args.test), model.task)
    print(f"{model.task}\t{score:.4f}")


def cmd_diagnose(args):
    rows = []
    for spec in args.tokenizer:
        label, _, path = spec.rpartition("=")
        model = SubwordModel.load(path)
        for sample in args.inputs:
            d = diagnostics(model, _read_lines([sample]))
            rows.append((f"{label or Path(path).stem}:{Path(sample).name}", d))
    out = _out_dir(args)
    write_diagnostics(out / "diagnostics.tsv", rows)
    sys.stdout.write((out / "diagnostics.tsv").read_text(encoding="utf-8"))


def cmd_cost(args):
    if args.dims not in costmod.PRESETS:
        raise CliError("usage", f"unknown --dims {args.dims!r}; "
                       f"choose from {sorted(costmod.PRESETS)}", EXIT_USAGE)
    lengths = _floats(args.mean_lengths) if args.mean_lengths else None
    vocabs = _ints(args.vocab)
    if lengths is not None and len(lengths) != len(vocabs):
        raise CliError("usage", "--mean-lengths needs one value per --vocab", EXIT_USAGE)
    rows = costmod.cost_table(costmod.PRESETS[args.dims], vocabs, lengths)
    text = costmod.format_cost_table(rows)
    if lengths is not None:
        base = costmod.PRESETS[args.dims]
        ref = base.with_vocab(vocabs[0])
        text += "\n# relative training cost vs first row (flops x mean length)\n"
        for v, length in zip(vocabs, lengths):
            r = costmod.relative_cost(base.with_vocab(v), ref, length, lengths[0])
            text += f"{v}\t{r:.4f}\n"
    _emit(text, args, "cost.tsv")


def _load_records(paths):
    records = []
    for p in paths:
        records.extend(read_records(p))
    if not records:
        raise CliError("input", "no records found", EXIT_INPUT)
    return records


def cmd_regress(args):
    records = _load_records(args.records)
    if args.setting:
        records = [r for r in records if r.setting in args.setting]
    if args.alpha:
        keep = set(_floats(args.alpha))
        records = [r for r in records if r.alpha in keep]
    if not records:
        raise CliError("input", "no records left after filtering", EXIT_INPUT)
    high = args.high_resource.split(",") if args.high_resource else HIGH_RESOURCE
    fit = fit_lmm(records, args.formula, method=args.method, high_resource=high)
    _emit(fit.summary_table(), args, "lmm_summary.tsv")


def cmd_report(args):
    records = _load_records(args.records)
    out = _out_dir(args)
    paths = emit_report(records, out)
    for param in args.marginalize or []:
        rows = marginalize(records, param)
        p = out / f"marginal.{param}.tsv"
        p.write_text(format_marginal(rows, param), encoding="utf-8")
        paths.append(p)
    for p in paths:
        print(p)


def cmd_run_grid(args):
    config = load_config(args.config)
    run_dir = Path(args.out) if args.out else config.run_dir()
    pipe = Pipeline(config, run_dir)
    outcome = pipe.run_grid(workers=args.workers)
    print(f"run directory: {run_dir}")
    print(f"cells completed now: {len(outcome.completed)}; already done: {len(outcome.skipped)}; "
          f"failed: {len(outcome.failed)}")
    if config.baselines:
        for name, path in pipe.run_baselines().items():
            print(f"baseline {name}: {path}")
    records = RecordsFile(pipe.records_path).read()
    if records:
        emit_report(records, run_dir / "report")
    if outcome.failed:
        for job, msg in outcome.failed:
            print(f"failed {job}: {msg}", file=sys.stderr)
        raise CliError("partial", f"{len(outcome.failed)} grid cells failed; see "
                       f"{run_dir / 'failures.tsv'}", EXIT_PARTIAL)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="famadapt",
                                     description="Targeted multilingual adaptation workbench.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--output-root", default="runs",
                        help=f"artifact root (overridden by ${OUTPUT_ROOT_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help="output directory (default: run-stamped under the root)")
        return p

    p = add("clean", cmd_clean, "filter, deduplicate and split raw text")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--language", required=True)
    p.add_argument("--dev-frac", type=float, default=0.05)
    p.add_argument("--test-frac", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="cleaning threshold override")

    p = add("sample", cmd_sample, "alpha sampling weights and a sampled stream")
    p.add_argument("--corpus-dir", required=True, help="directory of <lang>.train.txt files")
    p.add_argument("--alpha", type=_floats, default=[0.1, 0.2, 0.3, 0.4, 1.0])
    p.add_argument("--measure", choices=("lines", "bytes"), default="lines")
    p.add_argument("--cap", action="append", metavar="LANG=BYTES")
    p.add_argument("--group", action="append", metavar="NAME=a,b,c")
    p.add_argument("--lines", type=int, default=0, help="draw this many lines at the first alpha")
    p.add_argument("--seed", type=int, default=0)

    p = add("train-vocab", cmd_train_vocab, "train a subword vocabulary")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--corpus-dir", help="sample lines from <lang>.train.txt files at --alpha")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--group", action="append", metavar="NAME=a,b,c")
    p.add_argument("--max-lines", type=int, default=5_000_000)
    p.add_argument("--seed", type=int, default=0)

    p = add("transplant", cmd_transplant, "FOCUS-initialize embeddings for a new vocabulary")
    p.add_argument("--old-tokenizer", required=True)
    p.add_argument("--old-checkpoint", required=True)
    p.add_argument("--new-tokenizer", required=True)
    p.add_argument("--text", nargs="+", required=True, help="text for auxiliary embeddings")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--aux-dim", type=int, default=32)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = add("pretrain", cmd_pretrain, "masked-language-model adaptation")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--init", help="starting checkpoint (default: random init)")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--group", action="append", metavar="NAME=a,b,c")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--freeze-steps", type=int)
    p.add_argument("--seed", type=int, default=0)

    for name, func, help_ in (("finetune", cmd_finetune, "fine-tune a POS tagger or parser"),):
        p = add(name, func, help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--tokenizer", required=True)
        p.add_argument("--task", choices=("pos", "uas"), required=True)
        p.add_argument("--train", nargs="+", required=True)
        p.add_argument("--dev", nargs="*")
        p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
        p.add_argument("--learning-rate", type=float)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--seed", type=int, default=0)

    p = add("evaluate", cmd_evaluate, "score a fine-tuned model on CoNLL-U test files")
    p.add_argument("--model", required=True)
    p.add_argument("--test", nargs="+", required=True)

    p = add("diagnose", cmd_diagnose, "tokenizer diagnostics on text samples")
    p.add_argument("--tokenizer", action="append", required=True, metavar="[LABEL=]PATH",
                   help="repeat to compare several tokenizers")
    p.add_argument("inputs", nargs="+")

    p = add("cost", cmd_cost, "parameter counts, FLOPs per token and relative cost")
    p.add_argument("--dims", default="xlmr-base")
    p.add_argument("--vocab", required=True, help="comma-separated vocabulary sizes")
    p.add_argument("--mean-lengths", help="comma-separated mean sequence lengths, one per vocab")

    p = add("regress", cmd_regress, "random-intercept mixed model over result records")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--formula", default=FINETUNED_FORMULA)
    p.add_argument("--setting", action="append")
    p.add_argument("--alpha", help="keep only these alpha values (comma-separated)")
    p.add_argument("--high-resource", help="comma-separated high-resource language codes")
    p.add_argument("--method", choices=("ml", "reml"), default="ml")

    p = add("report", cmd_report, "per-setting tables and marginal means")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--marginalize", action="append", choices=PARAMETERS)

    p = add("run-grid", cmd_run_grid, "run the full configured grid (resumable)")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        category, code = _categorize(exc)
        print(f"error[{category}]: {exc}", file=sys.stderr)
        if args.verbose or category == "internal":
            logger.exception("details")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
