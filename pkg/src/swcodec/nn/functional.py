"""Primitive differentiable ops used by the codec.

Convolutions take channels-first tensors ``(batch, channels, time)``;
attention and normalization take ``(batch, time, dim)``.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


class ShapeError(ValueError):
    pass


def _check_conv_input(x, weight, in_axis_size, op):
    if x.dim() != 3:
        raise ShapeError(f"{op}: expected input (batch, channels, time), got {x.dim()} axes")
    if weight.dim() != 3:
        raise ShapeError(f"{op}: expected weight with 3 axes, got {weight.dim()}")
    if x.shape[1] != in_axis_size:
        raise ShapeError(
            f"{op}: channel axis mismatch, input has {x.shape[1]} channels but weight expects {in_axis_size}"
        )


def same_padding(kernel: int, dilation: int = 1) -> int:
    if kernel % 2 == 0:
        raise ValueError(f"'same' padding needs an odd kernel, got {kernel}")
    return dilation * (kernel - 1) // 2


def conv1d(x, weight, bias=None, stride=1, dilation=1, padding: int | str = 0):
    """Cross-correlation ``(B, Cin, T) -> (B, Cout, T')``.

    ``T' = floor((T + 2*pad - dilation*(k-1) - 1) / stride) + 1``. ``padding="same"``
    picks ``dilation*(k-1)/2``.
    """
    _check_conv_input(x, weight, weight.shape[1], "conv1d")
    if padding == "same":
        padding = same_padding(weight.shape[-1], dilation)
    span = dilation * (weight.shape[-1] - 1) + 1
    if x.shape[-1] + 2 * padding < span:
        raise ShapeError(f"conv1d: time axis too short ({x.shape[-1]} frames) for kernel span {span}")
    return F.conv1d(x, weight, bias, stride=stride, padding=padding, dilation=dilation)


def transposed_conv1d(x, weight, bias=None, stride=1, padding=0, output_padding=0):
    """Adjoint of :func:`conv1d` sharing its weight layout ``(Cin_of_conv, Cout_of_conv, k)``.

    With zero bias, ``<conv1d(u, w), v> == <u, transposed_conv1d(v, w)>`` when the
    strides and paddings match and ``output_padding`` restores the length of ``u``.
    """
    _check_conv_input(x, weight, weight.shape[0], "transposed_conv1d")
    return F.conv_transpose1d(x, weight, bias, stride=stride, padding=padding, output_padding=output_padding)


def gelu(x):
    """GELU, tanh approximation."""
    return 0.5 * x * (1.0 + torch.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def snake(x, alpha):
    """``x + sin(alpha*x)^2 / alpha`` with ``alpha`` broadcast over channels."""
    alpha = torch.as_tensor(alpha, dtype=x.dtype)
    if bool((alpha <= 0).any()):
        raise ValueError("snake: alpha must be positive")
    return x + torch.sin(alpha * x) ** 2 / alpha


def layer_norm(x, gain, bias, eps=1e-5):
    mean = x.mean(-1, keepdim=True)
    var = ((x - mean) ** 2).mean(-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * gain + bias


def multi_head_attention(x, w_qkv, b_qkv, w_out, b_out, heads: int):
    """Bidirectional self-attention over ``(B, T, D)``.

    Returns the output and the attention weights ``(B, heads, T, T)``; every
    row of the weights is a softmax and sums to one.
    """
    b, t, d = x.shape
    if d % heads:
        raise ValueError(f"model dim {d} is not divisible by {heads} heads")
    dh = d // heads
    qkv = x @ w_qkv.T + b_qkv
    q, k, v = (z.reshape(b, t, heads, dh).transpose(1, 2) for z in qkv.split(d, dim=-1))
    scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
    attn = torch.softmax(scores, dim=-1)
    y = (attn @ v).transpose(1, 2).reshape(b, t, d)
    return y @ w_out.T + b_out, attn
