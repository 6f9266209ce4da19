"""Whisper-style encoder with switchable stem GELUs and absolute positional encodings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .nn import GELU, Conv1d, LayerNorm, Linear, MultiHeadAttention

# fixed affine scaling of natural-log mels into roughly [-1.5, 2]
MEL_OFFSET = 5.0
MEL_SCALE = 5.0


@dataclass(frozen=True)
class ModelConfig:
    n_mels: int = 40
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    use_stem_gelu: bool = False
    use_abs_pe: bool = False
    frozen_encoder: bool = False
    mlp_ratio: int = 4
    stack: int = 4
    down_channels: tuple = (128, 64)
    dilations: tuple = (1, 3, 5, 9)

    def __post_init__(self):
        object.__setattr__(self, "down_channels", tuple(self.down_channels))
        object.__setattr__(self, "dilations", tuple(self.dilations))
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.d_model % 2:
            raise ValueError("d_model must be even for sinusoidal encodings")

    @classmethod
    def whisper_small(cls, **overrides):
        base = dict(n_mels=80, d_model=768, n_layers=12, n_heads=12, down_channels=(512, 128))
        return cls(**{**base, **overrides})

    def standard(self) -> "ModelConfig":
        """Same sizes with both stem GELUs and absolute encodings restored."""
        return _replace(self, use_stem_gelu=True, use_abs_pe=True)


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


@dataclass
class LatentSequence:
    values: np.ndarray  # frames x dim
    frame_rate: float

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class EncoderOutput:
    latent: torch.Tensor  # (B, T, D)
    attn: list = field(default_factory=list)  # per layer (B, heads, T, T)
    hidden: list = field(default_factory=list)  # per layer (B, T, D)


def sinusoidal_pe(t: int, d_model: int) -> torch.Tensor:
    """Interleaved sin/cos table ``(t, d_model)``: even columns sin, odd columns cos."""
    if d_model % 2:
        raise ValueError("d_model must be even")
    pos = np.arange(t)[:, None]
    rates = 1.0 / 10000 ** (np.arange(0, d_model, 2) / d_model)
    pe = np.zeros((t, d_model))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates)
    return torch.from_numpy(pe)


class Stem(nn.Module):
    """conv(k3, s1) -> [GELU] -> conv(k3, s2) -> [GELU] over ``(B, T, n_mels)``.

    Without the GELUs the stem is an affine map of its input.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_mels = cfg.n_mels
        self.conv1 = Conv1d(cfg.n_mels, cfg.d_model, 3, stride=1)
        self.conv2 = Conv1d(cfg.d_model, cfg.d_model, 3, stride=2)
        self.act = GELU() if cfg.use_stem_gelu else nn.Identity()

    def forward(self, mel):
        if mel.shape[-1] != self.n_mels:
            raise ValueError(f"stem expects {self.n_mels} mel bins, got {mel.shape[-1]}")
        x = ((mel + MEL_OFFSET) / MEL_SCALE).transpose(1, 2)
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return x.transpose(1, 2)


class TransformerBlock(nn.Module):
    def __init__(self, d_model, n_heads, mlp_ratio=4):
        super().__init__()
        self.ln_attn = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.ln_mlp = LayerNorm(d_model)
        self.fc1 = Linear(d_model, mlp_ratio * d_model)
        self.act = GELU()
        self.fc2 = Linear(mlp_ratio * d_model, d_model)

    def forward(self, x):
        y, attn = self.attn(self.ln_attn(x))
        x = x + y
        x = x + self.fc2(self.act(self.fc1(self.ln_mlp(x))))
        return x, attn


class TransformerStack(nn.Module):
    """Optional absolute encodings followed by pre-norm blocks and a final norm."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.use_abs_pe = cfg.use_abs_pe
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.d_model, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_layers)
        )
        self.ln_post = LayerNorm(cfg.d_model)

    def forward(self, x) -> EncoderOutput:
        if self.use_abs_pe:
            x = x + sinusoidal_pe(x.shape[1], x.shape[2]).to(x.dtype)
        attn, hidden = [], []
        for block in self.blocks:
            x, a = block(x)
            attn.append(a)
            hidden.append(x)
        return EncoderOutput(self.ln_post(x), attn, hidden)


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.stem = Stem(cfg)
        self.stack = TransformerStack(cfg)

    def forward(self, mel) -> EncoderOutput:
        """Encode ``(B, T, n_mels)`` at 100 Hz into ``(B, ceil(T/2), d_model)`` at 50 Hz."""
        return self.stack(self.stem(mel))

    def forward_blocks(self, h) -> EncoderOutput:
        """Run only the transformer part on post-stem features."""
        return self.stack(h)
