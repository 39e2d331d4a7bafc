"""Embedding transplantation onto a new vocabulary.

Tokens shared by the old and new vocabularies keep their old rows. Every
other new token gets a convex combination of the old rows of its most
similar shared tokens, where similarity comes from small auxiliary
embeddings trained on target-language text and the combination weights are
the sparsemax of those similarities.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .subword import MARKER, SPECIAL_ROLES

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingMatrix:
    tokens: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise ValueError(
                f"{len(self.tokens)} tokens but matrix shape {self.vectors.shape}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite values")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def save(self, path):
        """word2vec text layout: ``rows dims`` header, then ``token v1 v2 ...``."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.tokens)} {self.dim}\n")
            for tok, row in zip(self.tokens, self.vectors):
                fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            rows, dims = (int(x) for x in fh.readline().split())
            tokens, data = [], np.empty((rows, dims))
            for i in range(rows):
                parts = fh.readline().rstrip("\n").split(" ")
                if len(parts) != dims + 1:
                    raise ValueError(f"{path}: row {i + 1} has {len(parts) - 1} values, expected {dims}")
                tokens.append(parts[0])
                data[i] = [float(x) for x in parts[1:]]
        return cls(tokens, data)


@dataclass(frozen=True)
class MarkerConvention:
    """How a vocabulary flags word boundaries.

    ``prefix``: word-initial pieces start with ``symbol`` (SentencePiece ``▁``,
    byte-level BPE ``Ġ``). ``continuation``: non-initial pieces start with
    ``symbol`` (WordPiece ``##``).
    """

    kind: str = "prefix"
    symbol: str = MARKER

    def normalize(self, token: str) -> tuple[bool, str]:
        """(is_word_initial, bare surface)."""
        if self.kind == "prefix":
            if token.startswith(self.symbol):
                return True, token[len(self.symbol):]
            return False, token
        if self.kind == "continuation":
            if token.startswith(self.symbol):
                return False, token[len(self.symbol):]
            return True, token
        raise ValueError(f"unknown marker kind {self.kind!r}")


@dataclass
class Vocabulary:
    """Token list plus the metadata needed to compare vocabularies."""

    tokens: list[str]
    specials: dict  # role -> token string
    marker: MarkerConvention = MarkerConvention()

    @classmethod
    def from_subword(cls, model):
        return cls(list(model.tokens), dict(model.specials), MarkerConvention("prefix", model.marker))


@dataclass
class OverlapMap:
    pairs: dict  # new id -> old id

    def __len__(self):
        return len(self.pairs)

    @property
    def new_ids(self):
        return sorted(self.pairs)


def compute_overlap(old_vocab: Vocabulary, new_vocab: Vocabulary) -> OverlapMap:
    """Pair up tokens with identical normalized surface; specials pair by role."""
    pairs = {}
    old_special = {tok: role for role, tok in old_vocab.specials.items()}
    new_special = {tok: role for role, tok in new_vocab.specials.items()}
    old_index = {}
    for i, tok in enumerate(old_vocab.tokens):
        if tok in old_special:
            continue
        old_index.setdefault(old_vocab.marker.normalize(tok), i)
    old_role_id = {role: old_vocab.tokens.index(tok) for role, tok in old_vocab.specials.items()
                   if tok in old_vocab.tokens}
    for j, tok in enumerate(new_vocab.tokens):
        if tok in new_special:
            role = new_special[tok]
            if role in old_role_id:
                pairs[j] = old_role_id[role]
            continue
        i = old_index.get(new_vocab.marker.normalize(tok))
        if i is not None:
            pairs[j] = i
    return OverlapMap(pairs)


def sparsemax(scores) -> np.ndarray:
    """Euclidean projection of ``scores`` onto the probability simplex."""
    z = np.asarray(scores, dtype=np.float64)
    if z.size == 0:
        raise ValueError("sparsemax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise ValueError("sparsemax needs finite scores")
    z_sorted = np.sort(z)[::-1]
    cumsum = np.cumsum(z_sorted)
    k = np.arange(1, z.size + 1)
    support = 1 + k * z_sorted > cumsum
    k_max = k[support][-1]
    tau = (cumsum[k_max - 1] - 1) / k_max
    return np.maximum(z - tau, 0.0)


@dataclass
class AuxiliaryEmbeddings:
    vectors: np.ndarray  # (new_vocab_size, aux_dim)


def train_auxiliary_embeddings(lines, model, aux_dim: int = 32, window: int = 2,
                               include_specials: bool = False) -> AuxiliaryEmbeddings:
    """PPMI co-occurrence vectors factored by truncated SVD.

    Tokens never seen in ``lines`` get zero rows.
    """
    lines = list(lines)
    if not lines:
        raise ValueError("auxiliary embeddings need text")
    v = model.vocab_size
    if aux_dim > v:
        raise ValueError(f"aux_dim {aux_dim} exceeds vocabulary size {v}")
    counts = np.zeros((v, v))
    for line in lines:
        ids = model.encode(line)
        n = len(ids)
        for i in range(n):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if i != j:
                    counts[ids[i], ids[j]] += 1.0
    if not include_specials:
        n_special = len(SPECIAL_ROLES)
        counts[:n_special, :] = 0.0
        counts[:, :n_special] = 0.0
    total = counts.sum()
    if total == 0:
        return AuxiliaryEmbeddings(np.zeros((v, aux_dim)))
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    ppmi = np.where(counts > 0, np.maximum(pmi, 0.0), 0.0)

    u, s, _ = np.linalg.svd(ppmi)
    rank = int(np.sum(s > s[0] * 1e-10)) if s[0] > 0 else 0
    dim = aux_dim
    if aux_dim > rank:
        warnings.warn(f"aux_dim {aux_dim} exceeds PPMI rank {rank}; reducing to {rank}",
                      stacklevel=2)
        dim = max(rank, 1)
    u, s = u[:, :dim], s[:dim]
    # fix SVD sign ambiguity: largest-magnitude entry of each column positive
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(dim)])
    flip[flip == 0] = 1.0
    vectors = u * flip * np.sqrt(s)
    vectors[row[:, 0] == 0] = 0.0
    return AuxiliaryEmbeddings(vectors)


def _cosine_rows(a, b):
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (a @ b.T) / (na * nb.T)
    return np.nan_to_num(sims, nan=0.0, posinf=0.0, neginf=0.0)


@dataclass
class TransplantReport:
    copied: int
    combined: int
    fallback: int
    neighbors: dict  # new id -> (old ids, weights)


def focus_initialize(old_emb, overlap: OverlapMap, new_tokens, aux: AuxiliaryEmbeddings,
                     k: int = 10, seed: int = 0, return_report: bool = False):
    """Build the embedding table for ``new_tokens``.

    ``old_emb`` is an ``EmbeddingMatrix`` or array indexed by old ids.
    Shared tokens copy their old row exactly. A novel token with a nonzero
    auxiliary vector gets ``sum_j w_j * old[j]`` over its ``k`` most
    cosine-similar shared tokens with ``w = sparsemax(similarities)``. A
    novel token with a zero auxiliary vector gets the mean shared row plus
    Gaussian noise of norm about 1% of the mean row norm.
    """
    old = np.asarray(getattr(old_emb, "vectors", old_emb), dtype=np.float64)
    new_tokens = list(new_tokens)
    n_new = len(new_tokens)
    if len(overlap) == 0:
        raise ValueError("no overlapping tokens; transplant is undefined")
    if k < 1:
        raise ValueError("k must be at least 1")
    if aux.vectors.shape[0] != n_new:
        raise ValueError(
            f"auxiliary embeddings cover {aux.vectors.shape[0]} tokens, vocabulary has {n_new}"
        )
    rng = np.random.default_rng(seed)
    out = np.empty((n_new, old.shape[1]))
    shared_new = np.array(overlap.new_ids)
    shared_old = np.array([overlap.pairs[j] for j in shared_new])
    for j, i in zip(shared_new, shared_old):
        out[j] = old[i]

    novel = [j for j in range(n_new) if j not in overlap.pairs]
    aux_v = aux.vectors
    zero_aux = np.linalg.norm(aux_v, axis=1) == 0
    with_aux = [j for j in novel if not zero_aux[j]]
    without = [j for j in novel if zero_aux[j]]
    neighbors = {}
    kk = min(k, len(shared_new))
    if with_aux:
        sims = _cosine_rows(aux_v[with_aux], aux_v[shared_new])
        for row, j in zip(sims, with_aux):
            # stable sort so equal similarities resolve to the lower new id
            top = np.argsort(-row, kind="stable")[:kk]
            w = sparsemax(row[top])
            old_ids = shared_old[top]
            out[j] = w @ old[old_ids]
            neighbors[int(j)] = (old_ids.tolist(), w.tolist())
    if without:
        shared_rows = old[shared_old]
        mean = shared_rows.mean(axis=0)
        scale = 0.01 * np.linalg.norm(shared_rows, axis=1).mean() / np.sqrt(old.shape[1])
        for j in without:
            out[j] = mean + rng.normal(0.0, scale, size=old.shape[1])
    result = EmbeddingMatrix(new_tokens, out)
    if return_report:
        return result, TransplantReport(len(shared_new), len(with_aux), len(without), neighbors)
    return result
