"""CoNLL-U reading and writing (UPOS and HEAD columns only)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)


class ConllUParseError(ValueError):
    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


@dataclass
class Sentence:
    words: list[str]
    upos: list[str]
    heads: list[int]
    language: str = ""
    comments: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.words)
        if len(self.upos) != n or len(self.heads) != n:
            raise ValueError("words, upos and heads must have equal length")
        for h in self.heads:
            if not 0 <= h <= n:
                raise ValueError(f"head {h} outside [0, {n}]")

    def __len__(self):
        return len(self.words)


def read_conllu(path, language: str = "") -> list[Sentence]:
    """Parse a CoNLL-U file.

    Comment lines, multiword-token ranges (``1-2``) and empty nodes (``1.1``)
    are skipped. Raises ``ConllUParseError`` with the 1-based line number on
    a wrong column count or a non-integer head.
    """
    sentences = []
    words, upos, heads, comments = [], [], [], []

    def flush():
        if words:
            sentences.append(Sentence(list(words), list(upos), list(heads), language, list(comments)))
        words.clear()
        upos.clear()
        heads.clear()
        comments.clear()

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ConllUParseError(path, line_no, f"expected 10 columns, found {len(cols)}")
            if "-" in cols[ID] or "." in cols[ID]:
                continue
            try:
                head = int(cols[HEAD])
            except ValueError:
                raise ConllUParseError(path, line_no, f"non-integer head {cols[HEAD]!r}") from None
            words.append(cols[FORM])
            upos.append(cols[UPOS])
            heads.append(head)
    flush()
    return sentences


def write_conllu(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            for c in sent.comments:
                fh.write(c + "\n")
            for i, (w, tag, h) in enumerate(zip(sent.words, sent.upos, sent.heads), start=1):
                fh.write("\t".join([str(i), w, "_", tag, "_", "_", str(h),
                                    "root" if h == 0 else "dep", "_", "_"]) + "\n")
            fh.write("\n")


def load_treebank_dir(directory, language):
    """``<lang>.{train,dev,test}.conllu`` from ``directory``; missing splits are empty."""
    directory = Path(directory)
    out = {}
    for split in ("train", "dev", "test"):
        path = directory / f"{language}.{split}.conllu"
        out[split] = read_conllu(path, language) if path.exists() else []
    return out
