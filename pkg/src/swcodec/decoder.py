"""Decoder mirroring the encoder: transformer stack, transposed-conv stem, floored mel head."""

from __future__ import annotations

import math

import torch
from torch import nn

from . import dsp
from .encoder import ModelConfig, TransformerStack
from .nn import GELU, ConvTranspose1d, Linear

# softplus(HEAD_SHIFT) puts the untrained head near a typical speech log-mel level
HEAD_SHIFT = 6.0


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig, log_floor: float = 1e-5):
        super().__init__()
        self.cfg = cfg
        self.stack = TransformerStack(cfg)
        self.tconv1 = ConvTranspose1d(cfg.d_model, cfg.d_model, 3, stride=2)
        self.tconv2 = ConvTranspose1d(cfg.d_model, cfg.d_model, 3, stride=1)
        self.act = GELU() if cfg.use_stem_gelu else nn.Identity()
        self.head = Linear(cfg.d_model, cfg.n_mels)
        self.log_floor = math.log(log_floor)

    def forward(self, latent, n_frames: int | None = None):
        """``(B, T, d_model)`` at 50 Hz -> log-mels ``(B, 2T, n_mels)`` at 100 Hz, trimmed to ``n_frames``."""
        if latent.shape[-1] != self.cfg.d_model:
            raise ValueError(f"decoder expects dim {self.cfg.d_model}, got {latent.shape[-1]}")
        x = self.stack(latent).latent.transpose(1, 2)
        x = self.act(self.tconv1(x))
        x = self.act(self.tconv2(x)).transpose(1, 2)
        mel = self.log_floor + nn.functional.softplus(self.head(x) + HEAD_SHIFT)
        if n_frames is not None:
            mel = mel[:, :n_frames]
        return mel


def synthesize(mel: dsp.MelSpectrogram, cfg: dsp.MelConfig, iters: int = 64) -> dsp.AudioBuffer:
    """Waveform from a decoded mel via Griffin-Lim (deterministic zero-phase start)."""
    return dsp.griffin_lim(mel, cfg, iters)


def differentiable_synthesis(mel: torch.Tensor, cfg: dsp.MelConfig, length: int, gl_iters: int) -> torch.Tensor:
    """Training-time waveform for ``(B, frames, n_mels)`` log-mels.

    The phase comes from Griffin-Lim without gradient; the magnitude path and
    the final inverse STFT stay differentiable.
    """
    mag = dsp.mel_to_magnitude(mel, cfg)
    with torch.no_grad():
        phase = dsp.griffin_lim_phase(mag.detach(), cfg, gl_iters, length)
    return dsp.istft(mag * phase, cfg, length)
