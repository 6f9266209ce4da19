"""Module wrappers around :mod:`swcodec.nn.functional` with the codec's init scheme."""

from __future__ import annotations

import torch
from torch import nn

from . import functional as Fn

INIT_STD = 0.02


def _weight(*shape):
    w = torch.empty(*shape)
    nn.init.trunc_normal_(w, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
    return nn.Parameter(w)


class Conv1d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel=3, stride=1, dilation=1, padding="same"):
        super().__init__()
        self.weight = _weight(out_ch, in_ch, kernel)
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.stride, self.dilation = stride, dilation
        self.padding = Fn.same_padding(kernel, dilation) if padding == "same" else padding

    def forward(self, x):
        return Fn.conv1d(x, self.weight, self.bias, self.stride, self.dilation, self.padding)


class ConvTranspose1d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=None, output_padding=None):
        super().__init__()
        self.weight = _weight(in_ch, out_ch, kernel)
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.stride = stride
        # defaults give T_out = stride * T_in for odd kernels
        self.padding = (kernel - 1) // 2 if padding is None else padding
        self.output_padding = stride - 1 if output_padding is None else output_padding

    def forward(self, x):
        return Fn.transposed_conv1d(x, self.weight, self.bias, self.stride, self.padding, self.output_padding)


class Linear(nn.Module):
    def __init__(self, in_dim, out_dim):
        super().__init__()
        self.weight = _weight(out_dim, in_dim)
        self.bias = nn.Parameter(torch.zeros(out_dim))

    def forward(self, x):
        return x @ self.weight.T + self.bias


class LayerNorm(nn.Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return Fn.layer_norm(x, self.gain, self.bias, self.eps)


class GELU(nn.Module):
    def forward(self, x):
        return Fn.gelu(x)


class Snake(nn.Module):
    """Snake activation with a learnable per-channel frequency, for ``(B, C, T)`` input."""

    def __init__(self, channels):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(1, channels, 1))

    def forward(self, x):
        return Fn.snake(x, self.alpha)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        if dim % heads:
            raise ValueError(f"model dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.w_qkv = _weight(3 * dim, dim)
        self.b_qkv = nn.Parameter(torch.zeros(3 * dim))
        self.w_out = _weight(dim, dim)
        self.b_out = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        return Fn.multi_head_attention(x, self.w_qkv, self.b_qkv, self.w_out, self.b_out, self.heads)
