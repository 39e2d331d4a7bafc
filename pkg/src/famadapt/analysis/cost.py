"""Parameter counts, training FLOPs per token and relative training cost."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class CostModel:
    """Encoder dimensions. ``vocab_size`` may be 0 to isolate non-embedding weights."""

    vocab_size: int
    model_dim: int = 768
    layers: int = 12
    ffn_dim: int = 3072
    max_positions: int = 512
    token_types: int = 1
    pooler: bool = True

    def __post_init__(self):
        for name in ("model_dim", "layers", "ffn_dim", "max_positions"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.vocab_size, int) or self.vocab_size < 0:
            raise ValueError(f"vocab_size must be a non-negative integer, got {self.vocab_size!r}")

    def with_vocab(self, vocab_size: int) -> "CostModel":
        return replace(self, vocab_size=vocab_size)

    @property
    def N(self) -> int:
        return non_embedding_params(self)

    @property
    def d(self) -> int:
        return self.model_dim

    @property
    def v(self) -> int:
        return self.vocab_size


PRESETS = {
    "xlmr-base": CostModel(vocab_size=250_002, model_dim=768, layers=12, ffn_dim=3072,
                           max_positions=512),
    "xlmr-large": CostModel(vocab_size=250_002, model_dim=1024, layers=24, ffn_dim=4096,
                            max_positions=512),
}


def layer_params(d: int, ffn: int) -> int:
    attention = 4 * d * d + 4 * d
    feed_forward = 2 * d * ffn + d + ffn
    norms = 4 * d
    return attention + feed_forward + norms


def count_parameters(model: CostModel) -> int:
    """Total weights of a post-LN encoder.

    v*d token embeddings + max_positions*d positions + token_types*d
    segment embeddings + 2d embedding norm, then per layer
    (4d^2 + 4d) attention + (2*d*ffn + d + ffn) feed-forward + 4d norms,
    plus a d^2 + d pooler. The MLM output layer is tied and not counted.
    """
    d = model.model_dim
    total = (model.vocab_size + model.max_positions + model.token_types) * d + 2 * d
    total += model.layers * layer_params(d, model.ffn_dim)
    if model.pooler:
        total += d * d + d
    return total


def non_embedding_params(model: CostModel) -> int:
    return count_parameters(model.with_vocab(0))


def flops_per_token(N: int, d: int, v: int) -> int:
    """Training operations per token: 6(N + dv + 2d)."""
    return 6 * (int(N) + int(d) * int(v) + 2 * int(d))


def model_flops(model: CostModel) -> int:
    return flops_per_token(model.N, model.d, model.v)


def relative_cost(config_a: CostModel, config_b: CostModel,
                  mean_len_a: float, mean_len_b: float) -> float:
    """Cost of training ``a`` relative to ``b`` on the same text.

    Each side is flops per token times the mean number of tokens the
    tokenizer produces per sequence.
    """
    if mean_len_a <= 0 or mean_len_b <= 0:
        raise ValueError("mean sequence lengths must be positive")
    return (model_flops(config_a) * mean_len_a) / (model_flops(config_b) * mean_len_b)


def cost_table(base: CostModel, vocab_sizes, mean_lengths=None):
    """Rows of (vocab, params, flops/token, flops relative to the first row, mean length)."""
    rows = []
    reference = None
    for i, v in enumerate(vocab_sizes):
        m = base.with_vocab(int(v))
        flops = model_flops(m)
        reference = reference or flops
        length = mean_lengths[i] if mean_lengths is not None else None
        rows.append({
            "vocab_size": int(v),
            "parameters": count_parameters(m),
            "flops_per_token": flops,
            "flops_ratio": flops / reference,
            "mean_length": length,
        })
    return rows


def format_cost_table(rows) -> str:
    header = ["vocab_size", "parameters", "parameters_M", "flops_per_token", "flops_ratio"]
    if any(r["mean_length"] is not None for r in rows):
        header.append("mean_length")
    lines = ["\t".join(header)]
    for r in rows:
        cells = [str(r["vocab_size"]), str(r["parameters"]), f"{r['parameters'] / 1e6:.1f}",
                 str(r["flops_per_token"]), f"{r['flops_ratio']:.4f}"]
        if "mean_length" in header:
            cells.append("" if r["mean_length"] is None else f"{r['mean_length']:.2f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
