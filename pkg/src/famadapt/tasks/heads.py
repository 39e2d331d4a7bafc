"""Task heads on top of the encoder: a linear POS tagger and a biaffine arc scorer."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..nn import autodiff as ad
from ..nn.autodiff import Tensor
from ..nn.encoder import NEG_INF


def _param(rng, dtype, *shape, std=None):
    if std is None:
        std = 1.0 / np.sqrt(shape[0])
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


def _zeros(dtype, *shape):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class TaggerHead:
    def __init__(self, params: OrderedDict):
        self.params = params

    @classmethod
    def build(cls, model_dim, n_tags, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        p = OrderedDict()
        p["weight"] = _param(rng, dtype, model_dim, n_tags)
        p["bias"] = _zeros(dtype, n_tags)
        return cls(p)

    def logits(self, words):
        """``words``: (batch, n, d) -> (batch, n, n_tags)."""
        return words @ self.params["weight"] + self.params["bias"]


class BiaffineHead:
    """Arc scorer.

    ``h_head = FFN_head(r_i)``, ``h_dep = FFN_dep(r_j)`` (each a one-hidden-
    layer ReLU network d -> d_a -> d_a) and
    ``score(i -> j) = h_dep_j . U . h_head_i + W . h_head_i + b``.
    Candidate head 0 is a learned root vector.
    """

    def __init__(self, params: OrderedDict):
        self.params = params

    @property
    def arc_dim(self):
        return self.params["U"].shape[0]

    @classmethod
    def build(cls, model_dim, arc_dim=64, seed=0, dtype=np.float64):
        if arc_dim <= 0:
            raise ValueError("arc_dim must be positive")
        rng = np.random.default_rng(seed)
        p = OrderedDict()
        p["root"] = _param(rng, dtype, model_dim, std=0.02)
        for side in ("head_ffn", "dep_ffn"):
            p[f"{side}.hidden.weight"] = _param(rng, dtype, model_dim, arc_dim)
            p[f"{side}.hidden.bias"] = _zeros(dtype, arc_dim)
            p[f"{side}.out.weight"] = _param(rng, dtype, arc_dim, arc_dim)
            p[f"{side}.out.bias"] = _zeros(dtype, arc_dim)
        p["U"] = _zeros(dtype, arc_dim, arc_dim)
        p["W"] = _zeros(dtype, arc_dim)
        p["b"] = _zeros(dtype, 1)
        return cls(p)

    def ffn(self, side, x):
        p = self.params
        hidden = ad.relu(x @ p[f"{side}.hidden.weight"] + p[f"{side}.hidden.bias"])
        return hidden @ p[f"{side}.out.weight"] + p[f"{side}.out.bias"]

    def scores(self, words, word_mask=None):
        """``words``: (batch, n, d) Tensor -> (batch, n+1, n) arc scores.

        Entry ``[b, i, j]`` scores head ``i`` (0 = root) for dependent ``j+1``.
        Candidate heads at padded word slots get a large negative score.
        """
        p = self.params
        batch, n, d = words.shape
        root = ad.add(ad.reshape(p["root"], (1, 1, d)),
                      Tensor(np.zeros((batch, 1, d), dtype=words.data.dtype)))
        full = ad.concat([root, words], axis=1)
        h_head = self.ffn("head_ffn", full)              # (B, n+1, da)
        h_dep = self.ffn("dep_ffn", words)               # (B, n, da)
        bilinear = h_head @ ad.swapaxes(h_dep @ p["U"], 1, 2)   # (B, n+1, n)
        linear = ad.reshape(h_head @ p["W"], (batch, n + 1, 1))
        s = bilinear + linear + p["b"]
        if word_mask is not None:
            cand = np.concatenate([np.ones((batch, 1), dtype=bool), np.asarray(word_mask)], axis=1)
            s = s + np.where(cand, 0.0, NEG_INF).astype(s.data.dtype)[:, :, None]
        return s


def biaffine_scores(vectors, head: BiaffineHead) -> np.ndarray:
    """(n+1, n) score matrix for one sentence's contextual vectors (n, d)."""
    r = np.asarray(vectors, dtype=head.params["U"].data.dtype)
    with ad.no_grad():
        return head.scores(Tensor(r[None])).data[0]


def head_distribution(scores: np.ndarray) -> np.ndarray:
    """Column-wise softmax of an (n+1, n) score matrix: P(head i | dependent j)."""
    z = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)
