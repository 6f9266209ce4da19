"""Frame stacking down to 12.5 Hz, finite scalar quantization and the mirrored upsampler."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .encoder import ModelConfig
from .nn import Conv1d, Snake


@dataclass(frozen=True)
class FSQSpec:
    levels: tuple = (8, 7, 6, 6)
    n_groups: int = 8

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if any(v < 2 for v in self.levels):
            raise ValueError(f"every FSQ level must be >= 2, got {self.levels}")
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if self.codebook_size > 65536:
            raise ValueError("codebook too large for u16 token storage")

    @property
    def dims_per_group(self) -> int:
        return len(self.levels)

    @property
    def code_dim(self) -> int:
        return self.n_groups * self.dims_per_group

    @property
    def codebook_size(self) -> int:
        return math.prod(self.levels)

    @property
    def bits_per_frame(self) -> float:
        return self.n_groups * math.log2(self.codebook_size)

    def bitrate(self, frame_rate: float = 12.5) -> float:
        return self.bits_per_frame * frame_rate


@dataclass
class CodeGrid:
    indices: np.ndarray  # frames x n_groups
    original_frames: int  # 50 Hz frames before divisibility padding
    frame_rate: float = 12.5

    @property
    def frames(self) -> int:
        return self.indices.shape[0]


class _StraightThrough(torch.autograd.Function):
    """Forward emits the lattice values exactly; backward is the identity on ``z``."""

    @staticmethod
    def forward(ctx, z, lattice):
        return lattice.clone()

    @staticmethod
    def backward(ctx, grad):
        return grad, None


class FSQ(nn.Module):
    """Finite scalar quantizer over contiguous groups of ``len(levels)`` dims.

    Each scalar is squashed with a shifted tanh so that rounding yields exactly
    ``L`` integers, then normalized by ``L // 2`` into ``[-1, 1]``. The
    backward pass is the identity with respect to the pre-quantization input.
    """

    def __init__(self, spec: FSQSpec = FSQSpec(), eps: float = 1e-3):
        super().__init__()
        self.spec = spec
        levels = np.array(spec.levels, dtype=np.float64)
        half_l = (levels - 1) * (1 - eps) / 2
        offset = np.where(levels % 2 == 0, 0.5, 0.0)
        basis = np.concatenate([[1], np.cumprod(levels[:-1])]).astype(np.int64)
        self.register_buffer("levels", torch.tensor(levels), persistent=False)
        self.register_buffer("half_l", torch.tensor(half_l), persistent=False)
        self.register_buffer("offset", torch.tensor(offset), persistent=False)
        self.register_buffer("shift", torch.tensor(np.arctanh(offset / half_l)), persistent=False)
        self.register_buffer("half_width", torch.tensor(levels // 2), persistent=False)
        self.register_buffer("basis", torch.tensor(basis), persistent=False)

    def _grouped(self, z):
        if z.shape[-1] != self.spec.code_dim:
            raise ValueError(f"FSQ expects {self.spec.code_dim} dims, got {z.shape[-1]}")
        return z.reshape(*z.shape[:-1], self.spec.n_groups, self.spec.dims_per_group)

    def bound(self, z):
        z = z.to(torch.float64)
        return torch.tanh(z + self.shift) * self.half_l - self.offset

    def quantize(self, z):
        """``z (..., code_dim)`` -> (lattice values, same shape; codes ``(..., n_groups)``)."""
        g = self._grouped(z)
        rounded = torch.round(self.bound(g))
        lattice = (rounded / self.half_width).to(z.dtype).reshape(z.shape)
        zhat = _StraightThrough.apply(z, lattice.detach())
        return zhat, self.lattice_to_codes(lattice.detach())

    forward = quantize

    def lattice_to_codes(self, lattice):
        """Mixed-radix index of normalized lattice points, ``(..., code_dim) -> (..., n_groups)``."""
        g = self._grouped(lattice).to(torch.float64)
        digits = torch.round(g * self.half_width + self.half_width).to(torch.int64)
        return (digits * self.basis).sum(-1)

    def codes_to_digits(self, codes):
        codes = torch.as_tensor(codes, dtype=torch.int64)
        return (codes[..., None] // self.basis) % self.levels.to(torch.int64)

    def dequantize(self, codes, dtype=torch.float32):
        """Codes ``(..., n_groups)`` -> normalized lattice values ``(..., code_dim)``."""
        codes = torch.as_tensor(codes, dtype=torch.int64)
        bad = (codes < 0) | (codes >= self.spec.codebook_size)
        if bool(bad.any()):
            loc = tuple(int(i) for i in torch.nonzero(bad)[0])
            raise ValueError(
                f"code index {int(codes[loc])} out of range [0, {self.spec.codebook_size}) at position {loc}"
            )
        digits = self.codes_to_digits(codes).to(torch.float64)
        values = (digits - self.half_width) / self.half_width
        return values.reshape(*codes.shape[:-1], self.spec.code_dim).to(dtype)

    def preimage(self, codes):
        """A pre-quantization input that quantizes to ``codes``.

        Targets the center of each integer's rounding cell, clipped to the
        open range of the bound, so the extreme levels are reachable too.
        """
        digits = self.codes_to_digits(codes).to(torch.float64)
        rounded = digits - self.half_width
        lo = torch.maximum(rounded - 0.5, -self.half_l - self.offset)
        hi = torch.minimum(rounded + 0.5, self.half_l - self.offset)
        z = torch.atanh(((lo + hi) / 2 + self.offset) / self.half_l) - self.shift
        return z.reshape(*codes.shape[:-1], self.spec.code_dim)


# --- temporal reshaping -------------------------------------------------------


def pad_frames(x, multiple: int):
    """Repeat the last frame of ``(B, T, C)`` until ``T`` divides ``multiple``; returns (x, T)."""
    t = x.shape[1]
    extra = (-t) % multiple
    if extra:
        x = torch.cat([x, x[:, -1:].expand(-1, extra, -1)], dim=1)
    return x, t


def stack_frames(x, factor: int = 4):
    b, t, c = x.shape
    if t % factor:
        raise ValueError(f"{t} frames is not a multiple of {factor}")
    return x.reshape(b, t // factor, factor * c)


def unstack_frames(x, factor: int = 4):
    b, t, c = x.shape
    return x.reshape(b, t * factor, c // factor)


def nearest_upsample(x, factor: int = 2):
    """``(B, C, T) -> (B, C, factor*T)`` repeating each frame."""
    return torch.repeat_interleave(x, factor, dim=-1)


class ResidualUnit(nn.Module):
    def __init__(self, channels, dilation, kernel=3):
        super().__init__()
        self.act1 = Snake(channels)
        self.conv1 = Conv1d(channels, channels, kernel, dilation=dilation)
        self.act2 = Snake(channels)
        self.conv2 = Conv1d(channels, channels, 1)

    def forward(self, x):
        return x + self.conv2(self.act2(self.conv1(self.act1(x))))


class ResidualStack(nn.Sequential):
    def __init__(self, channels, dilations):
        super().__init__(*(ResidualUnit(channels, d) for d in dilations))


class Downsampler(nn.Module):
    """Stack 4 frames into channels, then compress to ``code_dim`` with Snake residual stacks."""

    def __init__(self, cfg: ModelConfig, code_dim: int):
        super().__init__()
        self.factor = cfg.stack
        widths = (cfg.stack * cfg.d_model, *cfg.down_channels)
        layers = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            if layers:
                layers.append(Snake(cin))
            layers += [Conv1d(cin, cout, 3), ResidualStack(cout, cfg.dilations)]
        layers += [Snake(widths[-1]), Conv1d(widths[-1], code_dim, 3)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        """``(B, T, d_model)`` with ``T % 4 == 0`` -> ``(B, T/4, code_dim)``."""
        x = stack_frames(x, self.factor).transpose(1, 2)
        return self.net(x).transpose(1, 2)


class Upsampler(nn.Module):
    """Two rounds of 2x nearest-neighbor upsampling, each followed by conv + residual stack."""

    def __init__(self, cfg: ModelConfig, code_dim: int):
        super().__init__()
        if cfg.stack != 4:
            raise ValueError("the upsampler mirrors a 4x stack with two 2x stages")
        c1, c2 = cfg.down_channels[0], cfg.down_channels[-1]
        self.proj_in = Conv1d(code_dim, c2, 3)
        self.stage1 = nn.ModuleList([Conv1d(c2, c2, 3), ResidualStack(c2, cfg.dilations)])
        self.stage2 = nn.ModuleList([Conv1d(c2, c1, 3), ResidualStack(c1, cfg.dilations)])
        self.act_out = Snake(c1)
        self.proj_out = Conv1d(c1, cfg.d_model, 3)

    def forward(self, x):
        """``(B, T, code_dim)`` -> ``(B, 4T, d_model)``."""
        x = self.proj_in(x.transpose(1, 2))
        for conv, res in (self.stage1, self.stage2):
            x = res(conv(nearest_upsample(x, 2)))
        return self.proj_out(self.act_out(x)).transpose(1, 2)


# --- token stream file ------------------------------------------------------

TOKEN_MAGIC = b"SWTOK"
TOKEN_VERSION = 1


class TokenFormatError(ValueError):
    pass


def write_tokens(path, grid: CodeGrid, spec: FSQSpec):
    idx = np.asarray(grid.indices)
    if idx.ndim != 2 or idx.shape[1] != spec.n_groups:
        raise ValueError(f"indices must be frames x {spec.n_groups}, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= spec.codebook_size):
        raise ValueError("code index out of range")
    header = TOKEN_MAGIC + struct.pack(
        f"<HBB{spec.dims_per_group}BfI",
        TOKEN_VERSION,
        spec.n_groups,
        spec.dims_per_group,
        *spec.levels,
        grid.frame_rate,
        grid.original_frames,
    )
    Path(path).write_bytes(header + idx.astype("<u2").tobytes())


def read_tokens(path) -> tuple[CodeGrid, FSQSpec]:
    data = Path(path).read_bytes()
    if data[:5] != TOKEN_MAGIC:
        raise TokenFormatError(f"{path}: bad magic at offset 0")
    if len(data) < 9:
        raise TokenFormatError(f"{path}: truncated header at offset {len(data)}")
    version, n_groups, dims = struct.unpack_from("<HBB", data, 5)
    if version != TOKEN_VERSION:
        raise TokenFormatError(f"{path}: unsupported version {version} at offset 5")
    fixed = struct.Struct(f"<{dims}BfI")
    if len(data) < 9 + fixed.size:
        raise TokenFormatError(f"{path}: truncated header at offset {len(data)}")
    *levels, frame_rate, original = fixed.unpack_from(data, 9)
    try:
        spec = FSQSpec(tuple(levels), n_groups)
    except ValueError as exc:
        raise TokenFormatError(f"{path}: invalid levels at offset 9: {exc}") from exc
    start = 9 + fixed.size
    payload = len(data) - start
    if payload % (2 * n_groups):
        raise TokenFormatError(
            f"{path}: payload of {payload} bytes at offset {start} is not a whole number of frames"
        )
    idx = np.frombuffer(data, dtype="<u2", offset=start).reshape(-1, n_groups).astype(np.int64)
    bad = np.argwhere(idx >= spec.codebook_size)
    if bad.size:
        f, g = bad[0]
        raise TokenFormatError(
            f"{path}: index {idx[f, g]} out of range at offset {start + 2 * (f * n_groups + g)}"
        )
    return CodeGrid(idx, int(original), float(frame_rate)), spec
