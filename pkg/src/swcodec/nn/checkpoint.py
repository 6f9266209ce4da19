"""SWCKPT: named float32 tensor records behind a small little-endian header.

Layout: magic ``SWCKPT``, u16 version, u64 step, u32 record count, then per
record: u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims, f32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"SWCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, step: int, records: dict):
    chunks = [MAGIC, struct.pack("<HQI", VERSION, step, len(records))]
    for name, tensor in records.items():
        raw = name.encode("utf-8")
        arr = tensor.detach().cpu().numpy().astype("<f4")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at offset {self.pos}")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def raw(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def read_checkpoint(path) -> tuple[int, dict]:
    """Returns ``(step, records)``; raises :class:`CheckpointError` without partial results."""
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if r.raw(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic at offset 0")
    version, step, count = r.take("<HQI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    records = {}
    for _ in range(count):
        (name_len,) = r.take("<H")
        name = r.raw(name_len).decode("utf-8")
        (ndim,) = r.take("<B")
        shape = r.take(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.raw(4 * n), dtype="<f4").reshape(shape)
        records[name] = torch.from_numpy(arr.copy())
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes at offset {r.pos}")
    return step, records


def module_records(module: torch.nn.Module, prefix: str) -> dict:
    return {prefix + name: p for name, p in module.state_dict().items()}


def check_module_records(module: torch.nn.Module, records: dict, prefix: str) -> dict:
    """Validate names and shapes against ``module``; returns a loadable state dict."""
    expected = set(module.state_dict())
    found = {k[len(prefix) :] for k in records if k.startswith(prefix)}
    if expected != found:
        missing, extra = sorted(expected - found), sorted(found - expected)
        raise CheckpointError(f"parameter name mismatch for '{prefix}': missing {missing[:5]}, unexpected {extra[:5]}")
    state = {}
    for name, ref in module.state_dict().items():
        value = records[prefix + name]
        if tuple(value.shape) != tuple(ref.shape):
            raise CheckpointError(f"shape mismatch for '{prefix}{name}': {tuple(value.shape)} vs {tuple(ref.shape)}")
        state[name] = value.to(ref.dtype)
    return state


def load_module_records(module: torch.nn.Module, records: dict, prefix: str):
    """Copy records into ``module``; the name sets and shapes must match exactly."""
    module.load_state_dict(check_module_records(module, records, prefix))
