"""Line-level cleaning, exact deduplication and hash-based splitting."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path


class Reject(str, enum.Enum):
    """Rejection reasons, in the order they are checked."""

    ENCODING = "encoding"
    TOO_FEW_TOKENS = "too_few_tokens"
    AVG_TOKEN_TOO_LONG = "avg_token_too_long"
    TOKEN_TOO_LONG = "token_too_long"
    INSUFFICIENT_ALPHABETIC = "insufficient_alphabetic"
    LANGID = "langid"


@dataclass(frozen=True)
class CleaningConfig:
    min_tokens: int = 2
    max_avg_token_chars: float = 16
    max_token_chars: int = 32
    min_alpha_fraction: float = 0.5
    langid_reject_threshold: float = 0.90

    def __post_init__(self):
        for name in ("min_tokens", "max_avg_token_chars", "max_token_chars",
                     "min_alpha_fraction", "langid_reject_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.min_alpha_fraction > 1:
            raise ValueError("min_alpha_fraction must be at most 1")


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def clean_line(line: str, config: CleaningConfig = CleaningConfig(),
               langid_score: float | None = None) -> Reject | None:
    """Return the first failing ``Reject`` reason, or None to keep the line.

    ``langid_score`` is the probability that the line is in the unwanted
    language (English in practice); the check is skipped when absent.
    """
    tokens = line.split()
    if len(tokens) < config.min_tokens:
        return Reject.TOO_FEW_TOKENS
    lengths = [len(t) for t in tokens]
    if sum(lengths) / len(lengths) > config.max_avg_token_chars:
        return Reject.AVG_TOKEN_TOO_LONG
    if max(lengths) > config.max_token_chars:
        return Reject.TOKEN_TOO_LONG
    letters = sum(1 for t in tokens for ch in t if _is_letter(ch))
    if letters < config.min_alpha_fraction * sum(lengths):
        return Reject.INSUFFICIENT_ALPHABETIC
    if langid_score is not None and langid_score >= config.langid_reject_threshold:
        return Reject.LANGID
    return None


@dataclass
class FilterStats:
    lines_in: int = 0
    lines_kept: int = 0
    duplicates_removed: int = 0
    rejections: Counter = field(default_factory=Counter)

    def merge(self, other: "FilterStats") -> "FilterStats":
        return FilterStats(
            self.lines_in + other.lines_in,
            self.lines_kept + other.lines_kept,
            self.duplicates_removed + other.duplicates_removed,
            self.rejections + other.rejections,
        )

    @property
    def rejected(self) -> int:
        return sum(self.rejections.values())

    def balanced(self) -> bool:
        return self.lines_in == self.lines_kept + self.rejected + self.duplicates_removed


SPLITS = ("train", "dev", "test")


@dataclass
class LanguageCorpus:
    language: str
    lines: list[str]
    splits: list[str] | None = None
    sources: list[str] = field(default_factory=list)

    @property
    def byte_size(self) -> int:
        return sum(len(line.encode("utf-8")) + 1 for line in self.lines)

    def split(self, name: str) -> list[str]:
        if self.splits is None:
            if name == "train":
                return list(self.lines)
            return []
        return [line for line, s in zip(self.lines, self.splits) if s == name]

    def split_counts(self) -> dict:
        return {name: len(self.split(name)) for name in SPLITS}


def clean_lines(raw_lines, config: CleaningConfig = CleaningConfig(), langid=None,
                seen=None):
    """Clean an iterable of lines (``str`` or undecoded ``bytes``).

    ``langid`` is an optional callable ``line -> probability``. ``seen`` is
    the dedup set shared across files. Returns ``(kept, stats)``.
    """
    seen = set() if seen is None else seen
    stats = FilterStats()
    kept = []
    for raw in raw_lines:
        stats.lines_in += 1
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                stats.rejections[Reject.ENCODING.value] += 1
                continue
        line = raw.strip()
        reason = clean_line(line, config, langid(line) if langid else None)
        if reason is not None:
            stats.rejections[reason.value] += 1
            continue
        if line in seen:
            stats.duplicates_removed += 1
            continue
        seen.add(line)
        kept.append(line)
        stats.lines_kept += 1
    return kept, stats


def _read_raw_lines(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read corpus file {path}: {exc.strerror or exc}") from exc
    if not data:
        return []
    lines = data.split(b"\n")
    if lines[-1] == b"":
        lines.pop()
    return [line.rstrip(b"\r") for line in lines]


def clean_corpus(files, language: str, config: CleaningConfig = CleaningConfig(),
                 langid=None) -> tuple[LanguageCorpus, FilterStats]:
    """Filter then exact-deduplicate every line of ``files`` in input order."""
    seen: set[str] = set()
    stats = FilterStats()
    lines: list[str] = []
    for path in files:
        kept, file_stats = clean_lines(_read_raw_lines(path), config, langid, seen)
        lines.extend(kept)
        stats = stats.merge(file_stats)
    return LanguageCorpus(language, lines, sources=[str(f) for f in files]), stats


def _split_key(line: str, seed: int) -> bytes:
    return hashlib.sha256(f"{seed}\x00{line}".encode("utf-8")).digest()


def split_corpus(corpus: LanguageCorpus, dev_frac: float = 0.05, test_frac: float = 0.05,
                 seed: int = 0) -> LanguageCorpus:
    """Assign train/dev/test labels.

    Lines are ranked by a seeded hash of their content; the lowest
    ``floor(n * test_frac)`` go to test, the next ``floor(n * dev_frac)`` to
    dev, and train absorbs the remainder. Labels therefore depend on the line
    set and seed, never on line order.
    """
    if not (0 <= dev_frac < 1 and 0 <= test_frac < 1 and dev_frac + test_frac < 1):
        raise ValueError(f"invalid split fractions dev={dev_frac} test={test_frac}")
    n = len(corpus.lines)
    n_test = math.floor(n * test_frac)
    n_dev = math.floor(n * dev_frac)
    order = sorted(range(n), key=lambda i: _split_key(corpus.lines[i], seed))
    labels = ["train"] * n
    for rank, i in enumerate(order):
        if rank < n_test:
            labels[i] = "test"
        elif rank < n_test + n_dev:
            labels[i] = "dev"
    return LanguageCorpus(corpus.language, list(corpus.lines), labels, list(corpus.sources))


def write_splits(corpus: LanguageCorpus, out_dir) -> dict:
    """One ``<lang>.<split>.txt`` file per split. Returns split -> path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in SPLITS:
        path = out_dir / f"{corpus.language}.{name}.txt"
        lines = corpus.split(name)
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        paths[name] = path
    return paths


def write_stats(path, stats_by_language: dict):
    """Tab-separated cleaning report, one row per language."""
    reasons = [r.value for r in Reject]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["language", "lines_in", "lines_kept", "duplicates_removed", *reasons])
        for lang, st in stats_by_language.items():
            w.writerow([lang, st.lines_in, st.lines_kept, st.duplicates_removed,
                        *(st.rejections.get(r, 0) for r in reasons)])
