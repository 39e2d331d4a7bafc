"""Tiny post-LayerNorm transformer encoder with a tied MLM head."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEG_INF = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    layers: int = 2
    model_dim: int = 64
    ffn_dim: int = 256
    heads: int = 2
    max_positions: int = 256
    init_std: float = 0.02

    def __post_init__(self):
        for name in ("vocab_size", "layers", "model_dim", "ffn_dim", "heads", "max_positions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.model_dim % self.heads:
            raise ValueError(
                f"model_dim {self.model_dim} is not divisible by heads {self.heads}"
            )

    def to_dict(self):
        return asdict(self)


def is_block_param(name: str) -> bool:
    """Parameters held fixed during the embedding-only warm-up window.

    Transformer blocks plus the positional table and embedding norm; the
    token embeddings and the MLM head stay trainable.
    """
    return name.startswith("blocks.") or name in (
        "embeddings.position",
        "embeddings.norm.weight",
        "embeddings.norm.bias",
    )


class Encoder:
    """Parameter container plus forward pass.

    ``params`` is an ordered name -> Tensor mapping; checkpoints, the
    optimizer and the freeze schedule all address parameters by name.
    """

    def __init__(self, config: EncoderConfig, params: OrderedDict):
        self.config = config
        self.params = params

    @classmethod
    def build(cls, config: EncoderConfig, embedding=None, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        d, f, std = config.model_dim, config.ffn_dim, config.init_std

        def normal(*shape):
            return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)

        def const(value, *shape):
            return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True)

        p = OrderedDict()
        p["embeddings.token"] = normal(config.vocab_size, d)
        p["embeddings.position"] = normal(config.max_positions, d)
        p["embeddings.norm.weight"] = const(1.0, d)
        p["embeddings.norm.bias"] = const(0.0, d)
        for i in range(config.layers):
            pre = f"blocks.{i}."
            for proj in ("q", "k", "v", "o"):
                p[pre + f"attn.{proj}.weight"] = normal(d, d)
                p[pre + f"attn.{proj}.bias"] = const(0.0, d)
            p[pre + "norm1.weight"] = const(1.0, d)
            p[pre + "norm1.bias"] = const(0.0, d)
            p[pre + "ffn.in.weight"] = normal(d, f)
            p[pre + "ffn.in.bias"] = const(0.0, f)
            p[pre + "ffn.out.weight"] = normal(f, d)
            p[pre + "ffn.out.bias"] = const(0.0, d)
            p[pre + "norm2.weight"] = const(1.0, d)
            p[pre + "norm2.bias"] = const(0.0, d)
        p["mlm.dense.weight"] = normal(d, d)
        p["mlm.dense.bias"] = const(0.0, d)
        p["mlm.norm.weight"] = const(1.0, d)
        p["mlm.norm.bias"] = const(0.0, d)
        p["mlm.bias"] = const(0.0, config.vocab_size)

        if embedding is not None:
            emb = np.asarray(getattr(embedding, "vectors", embedding))
            if emb.shape != (config.vocab_size, d):
                raise ValueError(
                    f"embedding shape {emb.shape} does not match "
                    f"(vocab_size={config.vocab_size}, model_dim={d})"
                )
            p["embeddings.token"] = Tensor(emb.astype(dtype, copy=True), requires_grad=True)
        return cls(config, p)

    @property
    def dtype(self):
        return self.params["embeddings.token"].data.dtype

    def named_parameters(self):
        return self.params.items()

    def state(self) -> dict:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state(self, state: dict):
        for name, t in self.params.items():
            t.data = np.array(state[name], dtype=t.data.dtype, copy=True)

    def copy(self) -> "Encoder":
        params = OrderedDict(
            (n, Tensor(t.data.copy(), requires_grad=True)) for n, t in self.params.items()
        )
        return Encoder(self.config, params)

    def forward(self, ids, pad_mask=None):
        """Contextual vectors of shape (batch, time, model_dim).

        ``pad_mask`` is a boolean (batch, time) array, True at real tokens.
        """
        ids = np.asarray(ids)
        batch, time = ids.shape
        if time > self.config.max_positions:
            raise ValueError(f"sequence length {time} exceeds max_positions")
        p = self.params
        cfg = self.config
        x = ad.embedding(p["embeddings.token"], ids) + ad.embedding(
            p["embeddings.position"], np.arange(time)
        )
        x = ad.layer_norm(x, p["embeddings.norm.weight"], p["embeddings.norm.bias"])

        if pad_mask is None:
            pad_mask = np.ones((batch, time), dtype=bool)
        attn_bias = np.where(pad_mask, 0.0, NEG_INF).astype(x.data.dtype)[:, None, None, :]
        h, dh = cfg.heads, cfg.model_dim // cfg.heads
        scale = 1.0 / np.sqrt(dh)

        for i in range(cfg.layers):
            pre = f"blocks.{i}."

            def proj(t, name):
                return t @ p[pre + f"attn.{name}.weight"] + p[pre + f"attn.{name}.bias"]

            def split(t):
                return ad.transpose(ad.reshape(t, (batch, time, h, dh)), (0, 2, 1, 3))

            q, k, v = split(proj(x, "q")), split(proj(x, "k")), split(proj(x, "v"))
            scores = (q @ ad.swapaxes(k, -1, -2)) * scale + attn_bias
            ctx = ad.softmax(scores, axis=-1) @ v
            ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (batch, time, cfg.model_dim))
            x = ad.layer_norm(x + proj(ctx, "o"), p[pre + "norm1.weight"], p[pre + "norm1.bias"])
            ff = ad.gelu(x @ p[pre + "ffn.in.weight"] + p[pre + "ffn.in.bias"])
            ff = ff @ p[pre + "ffn.out.weight"] + p[pre + "ffn.out.bias"]
            x = ad.layer_norm(x + ff, p[pre + "norm2.weight"], p[pre + "norm2.bias"])
        return x

    def mlm_logits(self, hidden):
        p = self.params
        t = ad.gelu(hidden @ p["mlm.dense.weight"] + p["mlm.dense.bias"])
        t = ad.layer_norm(t, p["mlm.norm.weight"], p["mlm.norm.bias"])
        return t @ ad.swapaxes(p["embeddings.token"], 0, 1) + p["mlm.bias"]


def build_encoder(config: EncoderConfig, embedding=None, seed: int = 0, dtype=np.float64) -> Encoder:
    """Seeded Gaussian init; a supplied (vocab_size, model_dim) table replaces
    the token embeddings verbatim."""
    return Encoder.build(config, embedding=embedding, seed=seed, dtype=dtype)
