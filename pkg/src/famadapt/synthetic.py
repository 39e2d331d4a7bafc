"""Synthetic languages for desk-scale runs and tests.

Each language has a lexicon in which every word carries exactly one UPOS tag
and sentences are generated from a small set of tag templates. Every word's
gold head is the preceding word (the first word attaches to the root), so
both tasks are learnable from the text alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tasks.conllu import Sentence, write_conllu

LATIN = "abdefgiklmnoprstuvz"
CYRILLIC = "абвгдежзиклмнопрстуя"

TEMPLATES = (
    ("DET", "NOUN", "VERB"),
    ("DET", "ADJ", "NOUN", "VERB", "ADV"),
    ("PRON", "VERB", "DET", "NOUN"),
    ("DET", "NOUN", "VERB", "ADP", "DET", "ADJ", "NOUN"),
    ("ADV", "PRON", "VERB", "ADP", "NOUN"),
    ("DET", "ADJ", "ADJ", "NOUN", "VERB", "PRON"),
    ("NOUN", "CCONJ", "NOUN", "VERB", "ADV"),
)

LEXICON_SIZES = {"DET": 4, "PRON": 6, "ADP": 5, "CCONJ": 3, "ADV": 12,
                 "ADJ": 25, "NOUN": 40, "VERB": 30}


@dataclass
class SyntheticLanguage:
    code: str
    alphabet: str
    lexicon: dict                  # tag -> list of words
    seed: int = 0

    @property
    def tag_of(self):
        return {w: tag for tag, words in self.lexicon.items() for w in words}

    def sentence(self, rng) -> Sentence:
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        words = [self.lexicon[t][rng.integers(len(self.lexicon[t]))] for t in template]
        return Sentence(words, list(template), list(range(len(words))), self.code)

    def sentences(self, n, seed=None) -> list[Sentence]:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return [self.sentence(rng) for _ in range(n)]

    def lines(self, n, seed=None) -> list[str]:
        return [" ".join(s.words) for s in self.sentences(n, seed)]


def _word(rng, alphabet, lo=2, hi=4):
    syllables = rng.integers(lo, hi + 1)
    vowels = [c for c in alphabet if c in "aeiouаеиоуя"]
    consonants = [c for c in alphabet if c not in vowels]
    out = []
    for _ in range(syllables):
        out.append(consonants[rng.integers(len(consonants))])
        out.append(vowels[rng.integers(len(vowels))])
    return "".join(out)


def make_language(code, alphabet, seed=0, sizes=LEXICON_SIZES) -> SyntheticLanguage:
    """A lexicon of distinct words over ``alphabet``, one tag per word."""
    rng = np.random.default_rng(seed)
    seen = set()
    lexicon = {}
    for tag, size in sizes.items():
        words = []
        while len(words) < size:
            w = _word(rng, alphabet, 1 if tag in ("DET", "ADP", "CCONJ", "PRON") else 2, 4)
            if w not in seen:
                seen.add(w)
                words.append(w)
        lexicon[tag] = words
    return SyntheticLanguage(code, alphabet, lexicon, seed)


def two_languages(seed=0):
    return (make_language("lat", LATIN, seed), make_language("cyr", CYRILLIC, seed + 1))


def write_fixture(root, n_text=4000, n_train=600, n_dev=100, n_test=200, seed=0,
                  test_only=()):
    """Write raw text and CoNLL-U splits for the two synthetic languages.

    Layout: ``root/text/<code>.txt`` and ``root/ud/<code>.<split>.conllu``.
    Codes in ``test_only`` get a test split only. Returns the languages.
    """
    root = Path(root)
    (root / "text").mkdir(parents=True, exist_ok=True)
    (root / "ud").mkdir(parents=True, exist_ok=True)
    langs = two_languages(seed)
    for i, lang in enumerate(langs):
        base = seed * 1000 + i * 100
        (root / "text" / f"{lang.code}.txt").write_text(
            "\n".join(lang.lines(n_text, seed=base + 1)) + "\n", encoding="utf-8")
        splits = {"test": n_test} if lang.code in test_only else \
            {"train": n_train, "dev": n_dev, "test": n_test}
        for j, (split, n) in enumerate(splits.items()):
            write_conllu(root / "ud" / f"{lang.code}.{split}.conllu",
                         lang.sentences(n, seed=base + 10 + j))
    return langs
