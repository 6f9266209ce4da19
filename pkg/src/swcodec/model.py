"""The full generator: mel -> encoder -> downsampler -> FSQ -> upsampler -> decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import dsp
from .bottleneck import FSQ, CodeGrid, Downsampler, FSQSpec, Upsampler, pad_frames
from .decoder import Decoder, differentiable_synthesis, synthesize
from .encoder import Encoder, LatentSequence, ModelConfig


@dataclass
class CodecOutput:
    mel: torch.Tensor  # input log-mels (B, T, n_mels)
    mel_hat: torch.Tensor  # decoded log-mels, same shape
    codes: torch.Tensor  # (B, T_12.5, n_groups)
    latent: torch.Tensor  # encoder output (B, T_50, d_model)
    quantized: torch.Tensor  # (B, T_12.5, code_dim)
    attn: list


class Codec(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), fsq: FSQSpec = FSQSpec(), mel_cfg: dsp.MelConfig | None = None):
        super().__init__()
        self.cfg, self.fsq_spec = cfg, fsq
        self.mel_cfg = mel_cfg or dsp.MelConfig(n_mels=cfg.n_mels)
        if self.mel_cfg.n_mels != cfg.n_mels:
            raise ValueError(f"mel config has {self.mel_cfg.n_mels} bins, model expects {cfg.n_mels}")
        self.encoder = Encoder(cfg)
        self.downsampler = Downsampler(cfg, fsq.code_dim)
        self.quantizer = FSQ(fsq)
        self.upsampler = Upsampler(cfg, fsq.code_dim)
        self.decoder = Decoder(cfg, self.mel_cfg.log_floor)
        self.set_encoder_frozen(cfg.frozen_encoder)

    @property
    def frame_rates(self):
        mel_rate = self.mel_cfg.frame_rate
        return mel_rate, mel_rate / 2, mel_rate / 2 / self.cfg.stack

    def set_encoder_frozen(self, frozen: bool):
        self.encoder_frozen = frozen
        for p in self.encoder.parameters():
            p.requires_grad_(not frozen)

    def features(self, wave):
        return dsp.log_mel_tensor(wave, self.mel_cfg)

    def encode_mel(self, mel):
        with torch.set_grad_enabled(torch.is_grad_enabled() and not self.encoder_frozen):
            return self.encoder(mel)

    def quantize_latent(self, latent):
        padded, _ = pad_frames(latent, self.cfg.stack)
        return self.quantizer(self.downsampler(padded))

    def decode_quantized(self, quantized, n_latent: int, n_mel: int):
        up = self.upsampler(quantized)[:, :n_latent]
        return self.decoder(up, n_mel)

    def forward_mel(self, mel) -> CodecOutput:
        enc = self.encode_mel(mel)
        quantized, codes = self.quantize_latent(enc.latent)
        mel_hat = self.decode_quantized(quantized, enc.latent.shape[1], mel.shape[1])
        return CodecOutput(mel, mel_hat, codes, enc.latent, quantized, enc.attn)

    def forward(self, wave) -> CodecOutput:
        """``(B, samples)`` waveform -> reconstruction in the log-mel domain."""
        with torch.no_grad():
            mel = self.features(wave)
        return self.forward_mel(mel)

    def synthesize_batch(self, mel_hat, length: int, gl_iters: int = 8):
        return differentiable_synthesis(mel_hat, self.mel_cfg, length, gl_iters)

    # --- single-utterance helpers on domain types ---

    @torch.no_grad()
    def encode_audio(self, audio: dsp.AudioBuffer) -> CodeGrid:
        mel = dsp.log_mel(audio, self.mel_cfg)
        x = torch.from_numpy(mel.values).to(self._dtype())[None]
        enc = self.encode_mel(x)
        _, codes = self.quantize_latent(enc.latent)
        return CodeGrid(codes[0].numpy(), enc.latent.shape[1], self.frame_rates[2])

    @torch.no_grad()
    def decode_codes(self, grid: CodeGrid) -> dsp.MelSpectrogram:
        q = self.quantizer.dequantize(torch.from_numpy(np.asarray(grid.indices)), self._dtype())[None]
        mel = self.decode_quantized(q, grid.original_frames, 2 * grid.original_frames)
        return dsp.MelSpectrogram(mel[0].double().numpy(), self.mel_cfg.frame_rate)

    def synthesize(self, mel: dsp.MelSpectrogram, iters: int = 64) -> dsp.AudioBuffer:
        return synthesize(mel, self.mel_cfg, iters)

    @torch.no_grad()
    def encode_latent(self, audio: dsp.AudioBuffer) -> LatentSequence:
        mel = dsp.log_mel(audio, self.mel_cfg)
        enc = self.encoder(torch.from_numpy(mel.values).to(self._dtype())[None])
        return LatentSequence(enc.latent[0].double().numpy(), self.frame_rates[1])

    def _dtype(self):
        return next(self.parameters()).dtype
