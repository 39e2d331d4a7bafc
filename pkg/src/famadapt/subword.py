"""Deterministic byte-pair-style subword vocabulary.

Words are whitespace-delimited after NFC normalization. The first
character of each word carries the boundary marker (``▁``), so ``ab cd``
starts out as ``▁a b ▁c d``. Training repeatedly merges the most frequent
adjacent symbol pair, breaking count ties by the lexicographically
smallest pair, until the vocabulary reaches the requested size.
"""

from __future__ import annotations

import csv
import itertools
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MARKER = "▁"
SPECIAL_ROLES = ("pad", "unk", "bos", "eos", "mask")
DEFAULT_SPECIALS = {
    "pad": "<pad>",
    "unk": "<unk>",
    "bos": "<s>",
    "eos": "</s>",
    "mask": "<mask>",
}
MAX_TRAINING_LINES = 5_000_000
FILE_MAGIC = "#famadapt-subword v1"


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def word_symbols(word: str, marker: str = MARKER) -> list[str]:
    return [marker + word[0], *word[1:]]


class SubwordModel:
    """Trained vocabulary plus ordered merge rules. Immutable after construction."""

    def __init__(self, tokens, merges, specials=None, marker=MARKER):
        self.specials = dict(specials or DEFAULT_SPECIALS)
        missing = set(SPECIAL_ROLES) - set(self.specials)
        if missing:
            raise ValueError(f"missing special roles: {sorted(missing)}")
        self.tokens = list(tokens)
        self.merges = [tuple(m) for m in merges]
        self.marker = marker
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for role in SPECIAL_ROLES:
            if self.token_to_id.get(self.specials[role]) != SPECIAL_ROLES.index(role):
                raise ValueError(f"special {role!r} must sit at id {SPECIAL_ROLES.index(role)}")
        self.merge_rank = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[int, ...]] = {}

    # ids of the special roles
    @property
    def pad_id(self):
        return 0

    @property
    def unk_id(self):
        return 1

    @property
    def bos_id(self):
        return 2

    @property
    def eos_id(self):
        return 3

    @property
    def mask_id(self):
        return 4

    @property
    def special_ids(self):
        return np.arange(len(SPECIAL_ROLES))

    @property
    def content_ids(self):
        return np.arange(len(SPECIAL_ROLES), len(self.tokens))

    @property
    def vocab_size(self):
        return len(self.tokens)

    @property
    def alphabet(self):
        """Initial symbols (single characters, marked or not) the model knows."""
        n = len(SPECIAL_ROLES)
        products = {a + b for a, b in self.merges}
        return self.tokens[n:len(self.tokens) - len(products)]

    def __repr__(self):
        return f"SubwordModel(vocab_size={self.vocab_size}, merges={len(self.merges)})"

    def encode_word(self, word: str) -> tuple[int, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = word_symbols(word, self.marker)
        rank = self.merge_rank
        while len(symbols) > 1:
            best, best_rank = None, None
            for pair in zip(symbols, symbols[1:]):
                r = rank.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            merged, i = [], 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        unk = self.unk_id
        ids = tuple(self.token_to_id.get(s, unk) for s in symbols)
        self._cache[word] = ids
        return ids

    def encode_words(self, words) -> list[tuple[int, ...]]:
        return [self.encode_word(normalize(w)) for w in words]

    def encode(self, text: str, add_special: bool = False) -> list[int]:
        ids = []
        for word in normalize(text).split():
            ids.extend(self.encode_word(word))
        if add_special:
            ids = [self.bos_id, *ids, self.eos_id]
        return ids

    def tokenize(self, text: str) -> list[str]:
        return [self.tokens[i] for i in self.encode(text)]

    def decode(self, ids) -> str:
        specials = {self.pad_id, self.bos_id, self.eos_id, self.mask_id}
        pieces = [self.tokens[i] for i in ids if i not in specials]
        return "".join(pieces).replace(self.marker, " ").strip()

    def save(self, path):
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(FILE_MAGIC + "\n")
            fh.write(f"vocab_size\t{self.vocab_size}\n")
            fh.write(f"merges\t{len(self.merges)}\n")
            fh.write(f"marker\t{self.marker}\n")
            fh.write("normalization\tNFC\n")
            for role in SPECIAL_ROLES:
                fh.write(f"special\t{role}\t{self.specials[role]}\n")
            fh.write("[vocab]\n")
            for t in self.tokens:
                fh.write(t + "\n")
            fh.write("[merges]\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines[0] != FILE_MAGIC:
            raise ValueError(f"{path}: not a subword model file")
        header, specials = {}, {}
        i = 1
        while lines[i] != "[vocab]":
            parts = lines[i].split("\t")
            if parts[0] == "special":
                specials[parts[1]] = parts[2]
            else:
                header[parts[0]] = parts[1]
            i += 1
        n_vocab, n_merges = int(header["vocab_size"]), int(header["merges"])
        tokens = lines[i + 1:i + 1 + n_vocab]
        j = i + 1 + n_vocab
        if lines[j] != "[merges]":
            raise ValueError(f"{path}: vocabulary section length mismatch")
        merges = [tuple(line.split(" ")) for line in lines[j + 1:j + 1 + n_merges]]
        return cls(tokens, merges, specials, header["marker"])


def _word_counts(lines, max_lines):
    counts = defaultdict(int)
    for line in itertools.islice(lines, max_lines):
        for word in normalize(line).split():
            counts[word] += 1
    return counts


def train_subword(lines, vocab_size: int, specials=None, marker: str = MARKER,
                  max_lines: int = MAX_TRAINING_LINES) -> SubwordModel:
    """Greedy pair-merge training.

    Only the first ``max_lines`` lines are consumed. The result has exactly
    ``vocab_size`` tokens; ``ValueError`` if the budget cannot hold the
    specials plus the observed alphabet, or if the corpus runs out of pairs
    before the budget is reached.
    """
    specials = dict(specials or DEFAULT_SPECIALS)
    counts = _word_counts(lines, max_lines)
    words = sorted(counts)
    syms = [word_symbols(w, marker) for w in words]
    freqs = [counts[w] for w in words]

    alphabet = sorted({s for ws in syms for s in ws})
    base = [specials[r] for r in SPECIAL_ROLES] + alphabet
    if vocab_size < len(base):
        raise ValueError(
            f"vocab_size {vocab_size} is smaller than specials + alphabet ({len(base)})"
        )
    vocab = list(base)
    in_vocab = set(vocab)

    pair_counts = defaultdict(int)
    pair_words = defaultdict(set)
    for idx, ws in enumerate(syms):
        for pair in zip(ws, ws[1:]):
            pair_counts[pair] += freqs[idx]
            pair_words[pair].add(idx)

    merges = []
    while len(vocab) < vocab_size:
        live = [(c, p) for p, c in pair_counts.items() if c > 0]
        if not live:
            raise ValueError(
                f"corpus supports at most {len(vocab)} tokens, requested {vocab_size}"
            )
        best = min(live, key=lambda cp: (-cp[0], cp[1]))[1]
        merges.append(best)
        merged_token = best[0] + best[1]
        if merged_token not in in_vocab:
            vocab.append(merged_token)
            in_vocab.add(merged_token)
        for idx in sorted(pair_words.pop(best, ())):
            ws, f = syms[idx], freqs[idx]
            for pair in zip(ws, ws[1:]):
                pair_counts[pair] -= f
                if pair != best:
                    pair_words[pair].discard(idx)
            out, i = [], 0
            while i < len(ws):
                if i + 1 < len(ws) and (ws[i], ws[i + 1]) == best:
                    out.append(merged_token)
                    i += 2
                else:
                    out.append(ws[i])
                    i += 1
            syms[idx] = out
            for pair in zip(out, out[1:]):
                pair_counts[pair] += f
                pair_words[pair].add(idx)
        pair_counts.pop(best, None)
    return SubwordModel(vocab, merges, specials, marker)


@dataclass(frozen=True)
class TokenizerDiagnostics:
    chars_per_token: float
    unk_unigram_frequency: float
    mean_sequence_length: float
    lines: int
    tokens: int


def diagnostics(model: SubwordModel, lines) -> TokenizerDiagnostics:
    """Characters per content token, ``<unk>`` frequency, mean encoded length.

    Characters are counted on the normalized text without whitespace (the
    boundary marker is never counted). Content tokens exclude begin/end but
    include ``<unk>``. Mean length counts begin/end.
    """
    lines = list(lines)
    if not lines:
        raise ValueError("diagnostics need a nonempty sample")
    chars = tokens = unks = 0
    for line in lines:
        text = normalize(line)
        chars += sum(len(w) for w in text.split())
        ids = model.encode(text)
        tokens += len(ids)
        unks += sum(1 for i in ids if i == model.unk_id)
    if tokens == 0:
        raise ValueError("sample contains no tokens")
    return TokenizerDiagnostics(
        chars_per_token=chars / tokens,
        unk_unigram_frequency=unks / tokens,
        mean_sequence_length=(tokens + 2 * len(lines)) / len(lines),
        lines=len(lines),
        tokens=tokens,
    )


def mean_sequence_length(model: SubwordModel, lines) -> float:
    """Mean encoded length per line, begin/end tokens included."""
    lengths = [len(model.encode(line, add_special=True)) for line in lines]
    return float(np.mean(lengths)) if lengths else 0.0


def write_diagnostics(path, rows):
    """``rows``: iterable of (label, TokenizerDiagnostics)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["sample", "lines", "tokens", "chars_per_token",
                    "unk_unigram_frequency", "mean_sequence_length"])
        for label, d in rows:
            w.writerow([label, d.lines, d.tokens, f"{d.chars_per_token:.6f}",
                        f"{d.unk_unigram_frequency:.6f}", f"{d.mean_sequence_length:.6f}"])
