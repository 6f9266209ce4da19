"""Finite-difference gradient suite over the primitive ops and every training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .losses import (
    DiscriminatorBank,
    LossWeights,
    disc_loss,
    feat_match_loss,
    gen_adv_loss,
    recon_loss,
    total_gen_loss,
)
from .nn import functional as F
from .nn.gradcheck import grad_check

TOLERANCE = 1e-4


@dataclass
class GradResult:
    name: str
    seed: int
    error: float

    @property
    def passed(self) -> bool:
        return self.error <= TOLERANCE


def _leaf(gen, *shape, scale=1.0, positive=False):
    x = torch.randn(*shape, generator=gen, dtype=torch.float64) * scale
    if positive:
        x = x.abs() + 0.5
    return x.requires_grad_(True)


def _projector(gen, like):
    r = torch.randn(like.shape, generator=gen, dtype=torch.float64)
    return lambda y: (y * r).sum()


def _case_conv1d(gen, rng):
    cin, cout, t = rng.integers(1, 5), rng.integers(1, 5), rng.integers(8, 16)
    k, stride, dil = int(rng.choice([1, 3, 5])), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    x, w, b = _leaf(gen, 2, cin, t), _leaf(gen, cout, cin, k, scale=0.5), _leaf(gen, cout)
    proj = _projector(gen, F.conv1d(x, w, b, stride, dil, "same"))
    return lambda *a: proj(F.conv1d(*a, stride, dil, "same")), [x, w, b]


def _case_tconv1d(gen, rng):
    cin, cout, t = rng.integers(1, 5), rng.integers(1, 5), rng.integers(4, 10)
    k, stride = int(rng.choice([3, 5])), int(rng.integers(1, 3))
    pad = (k - 1) // 2
    x, w, b = _leaf(gen, 2, cin, t), _leaf(gen, cin, cout, k, scale=0.5), _leaf(gen, cout)
    proj = _projector(gen, F.transposed_conv1d(x, w, b, stride, pad, stride - 1))
    return lambda *a: proj(F.transposed_conv1d(*a, stride, pad, stride - 1)), [x, w, b]


def _case_linear(gen, rng):
    d_in, d_out = rng.integers(2, 8), rng.integers(2, 8)
    x, w, b = _leaf(gen, 8, d_in), _leaf(gen, d_in, d_out), _leaf(gen, d_out)
    proj = _projector(gen, x @ w + b)
    return lambda x, w, b: proj(x @ w + b), [x, w, b]


def _case_gelu(gen, rng):
    x = _leaf(gen, 8, 4, scale=2.0)
    proj = _projector(gen, x)
    return lambda x: proj(F.gelu(x)), [x]


def _case_snake(gen, rng):
    c = int(rng.integers(1, 5))
    x, alpha = _leaf(gen, 2, c, 8, scale=2.0), _leaf(gen, 1, c, 1, positive=True)
    proj = _projector(gen, x)
    return lambda x, a: proj(F.snake(x, a)), [x, alpha]


def _case_layer_norm(gen, rng):
    d = int(rng.integers(2, 9))
    x, g, b = _leaf(gen, 5, d), _leaf(gen, d), _leaf(gen, d)
    proj = _projector(gen, x)
    return lambda *a: proj(F.layer_norm(*a)), [x, g, b]


def _case_attention(gen, rng):
    heads = int(rng.choice([1, 2, 4]))
    d, t = 4 * heads, int(rng.integers(2, 7))
    x = _leaf(gen, 1, t, d)
    w_qkv, b_qkv = _leaf(gen, 3 * d, d, scale=0.5), _leaf(gen, 3 * d, scale=0.1)
    w_out, b_out = _leaf(gen, d, d, scale=0.5), _leaf(gen, d, scale=0.1)
    proj = _projector(gen, x)
    return lambda *a: proj(F.multi_head_attention(*a, heads)[0]), [x, w_qkv, b_qkv, w_out, b_out]


def _signals(gen, n=2048):
    t = torch.arange(n, dtype=torch.float64) / 16000
    x = 0.3 * torch.sin(2 * np.pi * 220 * t)[None] + 0.05 * torch.randn(1, n, generator=gen, dtype=torch.float64)
    x_hat = (x + 0.05 * torch.randn(1, n, generator=gen, dtype=torch.float64)).detach().requires_grad_(True)
    return x, x_hat


def _small_bank(seed):
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return DiscriminatorBank(periods=(2, 3), n_scales=2, mpd_channels=(4, 4), msd_channels=(4, 4)).double()


def _case_recon(gen, rng):
    x, x_hat = _signals(gen)
    return lambda xh: recon_loss(x, xh), [x_hat]


def _case_disc(gen, rng):
    bank = _small_bank(int(rng.integers(1 << 30)))
    x, x_hat = _signals(gen)
    x_hat = x_hat.detach()
    params = list(bank.parameters())
    chosen = [params[i] for i in rng.choice(len(params), 4, replace=False)]
    return lambda *_: disc_loss(bank(x), bank(x_hat)), chosen


def _case_gen_adv(gen, rng):
    bank = _small_bank(int(rng.integers(1 << 30)))
    _, x_hat = _signals(gen)
    return lambda xh: gen_adv_loss(bank(xh)), [x_hat]


def _case_feat(gen, rng):
    bank = _small_bank(int(rng.integers(1 << 30)))
    x, x_hat = _signals(gen)
    return lambda xh: feat_match_loss(bank(x), bank(xh)), [x_hat]


def _case_total(gen, rng):
    bank = _small_bank(int(rng.integers(1 << 30)))
    x, x_hat = _signals(gen)
    w = LossWeights()

    def fn(xh):
        fake = bank(xh)
        return total_gen_loss(w, recon_loss(x, xh), gen_adv_loss(fake), feat_match_loss(bank(x), fake))[0]

    return fn, [x_hat]


CASES = {
    "conv1d": (_case_conv1d, None),
    "transposed_conv1d": (_case_tconv1d, None),
    "linear": (_case_linear, None),
    "gelu": (_case_gelu, None),
    "snake": (_case_snake, None),
    "layer_norm": (_case_layer_norm, None),
    "multi_head_attention": (_case_attention, None),
    "recon_loss": (_case_recon, 6),
    "disc_loss": (_case_disc, 3),
    "gen_adv_loss": (_case_gen_adv, 6),
    "feat_match_loss": (_case_feat, 6),
    "total_gen_loss": (_case_total, 4),
}


def run_case(name: str, seed: int) -> GradResult:
    build, n_coords = CASES[name]
    gen = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(seed)
    fn, inputs = build(gen, rng)
    return GradResult(name, seed, grad_check(fn, inputs, n_coords=n_coords, seed=seed))


def gradient_suite(seeds=range(20), names=None) -> list[GradResult]:
    return [run_case(name, s) for name in (names or CASES) for s in seeds]
