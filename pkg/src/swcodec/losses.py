"""Training objective: multi-scale mel L1, LSGAN terms, feature matching, and the discriminators."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from . import dsp

MPD_PERIODS = (2, 3, 5, 7, 11)
MSD_SCALES = 3
LRELU_SLOPE = 0.1


@dataclass(frozen=True)
class LossWeights:
    recon: float = 15.0
    adv: float = 1.0
    feat: float = 2.0
    eps: float = 1e-7

    def __post_init__(self):
        for name in ("recon", "adv", "feat"):
            v = getattr(self, name)
            if not (v >= 0 and v < float("inf")):
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def uses_gan(self) -> bool:
        return self.adv > 0 or self.feat > 0


# --- discriminators -----------------------------------------------------------


class PeriodDiscriminator(nn.Module):
    """Folds the waveform into ``(T/p, p)`` and applies strided 2-D convs along time."""

    def __init__(self, period, channels=(8, 16, 32, 32), kernel=5, stride=3):
        super().__init__()
        self.period = period
        layers, cin = [], 1
        for i, cout in enumerate(channels):
            s = stride if i < len(channels) - 1 else 1
            layers.append(nn.Conv2d(cin, cout, (kernel, 1), (s, 1), padding=(kernel // 2, 0)))
            cin = cout
        self.convs = nn.ModuleList(layers)
        self.post = nn.Conv2d(cin, 1, (3, 1), padding=(1, 0))

    def forward(self, x):
        b, t = x.shape
        if t % self.period:
            pad = self.period - t % self.period
            x = F.pad(x, (0, pad), mode="reflect")
            t += pad
        h = x.reshape(b, 1, t // self.period, self.period)
        feats = []
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LRELU_SLOPE)
            feats.append(h)
        score = self.post(h)
        feats.append(score)
        return score.flatten(1), feats


class ScaleDiscriminator(nn.Module):
    """1-D conv stack over the raw (or pooled) waveform."""

    def __init__(self, channels=(8, 16, 32, 32)):
        super().__init__()
        layers = [nn.Conv1d(1, channels[0], 15, 1, padding=7)]
        cin = channels[0]
        for cout in channels[1:]:
            layers.append(nn.Conv1d(cin, cout, 41, 4, padding=20, groups=min(4, cin)))
            cin = cout
        layers.append(nn.Conv1d(cin, cin, 5, 1, padding=2))
        self.convs = nn.ModuleList(layers)
        self.post = nn.Conv1d(cin, 1, 3, 1, padding=1)

    def forward(self, x):
        h = x[:, None]
        feats = []
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LRELU_SLOPE)
            feats.append(h)
        score = self.post(h)
        feats.append(score)
        return score.flatten(1), feats


class DiscriminatorBank(nn.Module):
    """Five period discriminators and three scale discriminators (raw, /2, /4)."""

    def __init__(self, periods=MPD_PERIODS, n_scales=MSD_SCALES, mpd_channels=(8, 16, 32, 32), msd_channels=(8, 16, 32, 32)):
        super().__init__()
        self.periods = tuple(periods)
        self.mpd = nn.ModuleList(PeriodDiscriminator(p, mpd_channels) for p in self.periods)
        self.msd = nn.ModuleList(ScaleDiscriminator(msd_channels) for _ in range(n_scales))

    def __len__(self):
        return len(self.mpd) + len(self.msd)

    def forward(self, x):
        """``(B, samples)`` -> list of ``(score (B, n), [feature maps])``, one per sub-discriminator."""
        if x.shape[-1] < 2 * max(self.periods):
            raise dsp.InputTooShortError(
                f"input too short: {x.shape[-1]} samples, discriminators need >= {2 * max(self.periods)}"
            )
        outs = [d(x) for d in self.mpd]
        h = x
        for i, d in enumerate(self.msd):
            if i:
                h = F.avg_pool1d(h[:, None], 4, 2, padding=2).squeeze(1)
            outs.append(d(h))
        return outs


def mpd_msd_forward(bank: DiscriminatorBank, x):
    return bank(x)


# --- losses -------------------------------------------------------------------


def recon_loss(x, x_hat, sample_rate: int = dsp.SAMPLE_RATE):
    """Sum over FFT sizes 32..2048 of the mean absolute log-mel difference."""
    if isinstance(x, dsp.AudioBuffer):
        x = torch.from_numpy(x.samples)
    if isinstance(x_hat, dsp.AudioBuffer):
        x_hat = torch.from_numpy(x_hat.samples)
    n = min(x.shape[-1], x_hat.shape[-1])
    x, x_hat = x[..., :n], x_hat[..., :n]
    if n < 2 ** dsp.LOSS_SCALES[-1]:
        raise dsp.InputTooShortError(f"input too short: {n} samples, recon loss needs >= {2 ** dsp.LOSS_SCALES[-1]}")
    total = 0.0
    for a, b in zip(dsp.multiscale_mels(x, sample_rate), dsp.multiscale_mels(x_hat, sample_rate)):
        total = total + (a - b).abs().mean()
    return total


def _mean_score(score):
    # average each score map before squaring, per batch item
    return score.reshape(score.shape[0], -1).mean(-1)


def disc_loss(real_outs, fake_outs):
    """LSGAN discriminator loss averaged over sub-discriminators."""
    terms = [
        ((_mean_score(r) - 1) ** 2 + _mean_score(f) ** 2).mean()
        for (r, _), (f, _) in zip(real_outs, fake_outs)
    ]
    return sum(terms) / len(terms)


def gen_adv_loss(fake_outs):
    terms = [((_mean_score(f) - 1) ** 2).mean() for f, _ in fake_outs]
    return sum(terms) / len(terms)


def feat_match_loss(real_outs, fake_outs, eps: float = 1e-7):
    """Relative L1 between real and fake feature maps, averaged over every (discriminator, layer) pair."""
    terms = []
    for (_, real_feats), (_, fake_feats) in zip(real_outs, fake_outs):
        if len(real_feats) != len(fake_feats):
            raise ValueError("real and fake passes captured different numbers of feature maps")
        for r, f in zip(real_feats, fake_feats):
            r = r.detach()
            terms.append((r - f).abs().sum() / (r.abs().sum() + eps))
    return sum(terms) / len(terms)


def total_gen_loss(weights: LossWeights, recon, adv, feat):
    """Weighted sum plus a per-term breakdown (floats)."""
    total = weights.recon * recon + weights.adv * adv + weights.feat * feat
    parts = {k: float(torch.as_tensor(v).detach()) for k, v in (("recon", recon), ("adv", adv), ("feat", feat), ("total", total))}
    return total, parts
