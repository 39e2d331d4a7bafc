from .autodiff import Tensor, no_grad
from .checkpoint import EncoderCheckpoint, load_checkpoint, save_checkpoint
from .encoder import Encoder, EncoderConfig, build_encoder, is_block_param
from .optim import Adam, NonFiniteLossError, clip_grad_norm, gradient
from .pretrain import (
    MaskedDevSet,
    PretrainConfig,
    PretrainResult,
    TrainingDiverged,
    mlm_mask,
    pretrain,
)

__all__ = [
    "Adam",
    "Encoder",
    "EncoderCheckpoint",
    "EncoderConfig",
    "MaskedDevSet",
    "NonFiniteLossError",
    "PretrainConfig",
    "PretrainResult",
    "Tensor",
    "TrainingDiverged",
    "build_encoder",
    "clip_grad_norm",
    "gradient",
    "is_block_param",
    "load_checkpoint",
    "mlm_mask",
    "no_grad",
    "pretrain",
    "save_checkpoint",
]
