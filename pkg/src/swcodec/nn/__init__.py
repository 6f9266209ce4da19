from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .functional import (
    ShapeError,
    conv1d,
    gelu,
    layer_norm,
    multi_head_attention,
    snake,
    transposed_conv1d,
)
from .gradcheck import grad_check, module_grad_check
from .layers import GELU, Conv1d, ConvTranspose1d, LayerNorm, Linear, MultiHeadAttention, Snake
from .optim import AdamW, NonFiniteGradientError, cosine_lr

__all__ = [
    "AdamW",
    "CheckpointError",
    "Conv1d",
    "ConvTranspose1d",
    "GELU",
    "LayerNorm",
    "Linear",
    "MultiHeadAttention",
    "NonFiniteGradientError",
    "ShapeError",
    "Snake",
    "conv1d",
    "cosine_lr",
    "gelu",
    "grad_check",
    "layer_norm",
    "module_grad_check",
    "multi_head_attention",
    "read_checkpoint",
    "snake",
    "transposed_conv1d",
    "write_checkpoint",
]
