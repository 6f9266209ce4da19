"""Signal processing: STFT, log-mel features, multi-scale mels and Griffin-Lim.

Every function accepts either an :class:`AudioBuffer`, a numpy array or a
torch tensor shaped ``(..., samples)``. Tensor inputs stay tensors so the
mel path can sit inside a differentiable loss.
"""

from __future__ import annotations

import functools
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import torch

SAMPLE_RATE = 16000
LOSS_SCALES = tuple(range(5, 12))

ArrayLike = Union["AudioBuffer", np.ndarray, torch.Tensor]


class InputTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM audio in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"audio must be mono (1-D), got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if samples.size and np.abs(samples).max() > 1.0:
            raise ValueError("audio clips beyond [-1, 1]")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = SAMPLE_RATE
    fft_size: int = 512
    hop: int = 160
    win: int = 400
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2)
        self.validate()

    def validate(self):
        if not 0 < self.hop <= self.win <= self.fft_size:
            raise ValueError(
                f"need 0 < hop <= win <= fft_size, got hop={self.hop} win={self.win} fft_size={self.fft_size}"
            )
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError(f"need 0 <= fmin < fmax <= sample_rate/2, got {self.fmin}, {self.fmax}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return math.ceil(n_samples / self.hop)


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # frames x n_mels
    frame_rate: float

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def scale_config(k: int, sample_rate: int = SAMPLE_RATE) -> MelConfig:
    """Mel settings for loss scale ``k`` (FFT size ``2**k``)."""
    n = 2**k
    return MelConfig(
        sample_rate=sample_rate, fft_size=n, hop=n // 4, win=n, n_mels=min(80, n // 2)
    )


def _as_tensor(x: ArrayLike) -> torch.Tensor:
    if isinstance(x, AudioBuffer):
        return torch.from_numpy(x.samples)
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
    return x


@functools.lru_cache(maxsize=64)
def _hann(win: int) -> np.ndarray:
    n = np.arange(win)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / win)


def _window(win: int, fft_size: int, like: torch.Tensor) -> torch.Tensor:
    w = torch.from_numpy(_hann(win)).to(like.dtype)
    left = (fft_size - win) // 2
    return torch.nn.functional.pad(w, (left, fft_size - win - left))


def stft(audio: ArrayLike, fft_size: int, hop: int, win: int) -> torch.Tensor:
    """Complex STFT with a periodic Hann window and reflect center padding.

    Returns ``(..., frames, fft_size // 2 + 1)`` with ``frames = ceil(n / hop)``.
    """
    if not 0 < hop <= win <= fft_size:
        raise ValueError(f"need 0 < hop <= win <= fft_size, got {hop}, {win}, {fft_size}")
    x = _as_tensor(audio)
    n = x.shape[-1]
    if n < win or n <= fft_size // 2:
        raise InputTooShortError(f"input too short: {n} samples for a {fft_size}-point window")
    lead = x.shape[:-1]
    spec = torch.stft(
        x.reshape(-1, n),
        n_fft=fft_size,
        hop_length=hop,
        win_length=fft_size,
        window=_window(win, fft_size, x),
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )
    spec = spec[..., : math.ceil(n / hop)].transpose(-1, -2)
    return spec.reshape(*lead, *spec.shape[-2:])


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=64)
def _filterbank(sample_rate, fft_size, n_mels, fmin, fmax) -> np.ndarray:
    freqs = np.linspace(0, sample_rate / 2, fft_size // 2 + 1)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    # area normalization: each triangle integrates to one in Hz
    fb *= 2.0 / (hi - lo)
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular, area-normalized filterbank, shape ``(n_mels, n_bins)``.

    The matrix is cached per config and read-only, so repeated calls return
    bit-identical values.
    """
    return _filterbank(cfg.sample_rate, cfg.fft_size, cfg.n_mels, float(cfg.fmin), float(cfg.fmax))


def log_mel_tensor(x: torch.Tensor, cfg: MelConfig) -> torch.Tensor:
    """Differentiable log-mel of ``(..., samples)``; returns ``(..., frames, n_mels)``."""
    spec = stft(x, cfg.fft_size, cfg.hop, cfg.win)
    power = spec.real**2 + spec.imag**2
    fb = _fb_tensor(cfg, power.dtype)
    mel = power @ fb.T
    return torch.log(torch.clamp(mel, min=cfg.log_floor))


def log_mel(audio: AudioBuffer, cfg: MelConfig) -> MelSpectrogram:
    if audio.sample_rate != cfg.sample_rate:
        raise ValueError(f"audio is {audio.sample_rate} Hz but config expects {cfg.sample_rate} Hz")
    with torch.no_grad():
        values = log_mel_tensor(torch.from_numpy(audio.samples), cfg).numpy()
    return MelSpectrogram(values=values, frame_rate=cfg.frame_rate)


def multiscale_mels(audio: ArrayLike, sample_rate: int | None = None) -> list:
    """Log-mels at FFT sizes 32 ... 2048.

    An :class:`AudioBuffer` yields :class:`MelSpectrogram` objects; tensors
    yield differentiable ``(..., frames, n_mels)`` tensors.
    """
    if isinstance(audio, AudioBuffer):
        sample_rate = audio.sample_rate
    sample_rate = sample_rate or SAMPLE_RATE
    x = _as_tensor(audio)
    if x.shape[-1] < 2 ** LOSS_SCALES[-1]:
        raise InputTooShortError(
            f"input too short: {x.shape[-1]} samples, multi-scale mels need >= {2 ** LOSS_SCALES[-1]}"
        )
    cfgs = [scale_config(k, sample_rate) for k in LOSS_SCALES]
    if isinstance(audio, AudioBuffer):
        return [log_mel(audio, c) for c in cfgs]
    return [log_mel_tensor(x, c) for c in cfgs]


def mel_to_magnitude(log_mels: torch.Tensor, cfg: MelConfig, iters: int = 100) -> torch.Tensor:
    """Linear STFT magnitude whose mel projection best matches ``log_mels``.

    Solves the non-negative least-squares problem ``fb @ power = mel_power``
    with multiplicative updates. Cells at the log floor map to zero power.
    Only the final update carries gradient, which keeps the backward pass
    cheap when this sits inside a training loss.
    """
    fb = _fb_tensor(cfg, log_mels.dtype)
    mel_power = torch.clamp(torch.exp(log_mels) - cfg.log_floor, min=0.0)
    target = mel_power @ fb
    with torch.no_grad():
        power = torch.clamp(target, min=1e-12)
        for _ in range(iters - 1):
            power = power * target / torch.clamp((power @ fb.T) @ fb, min=1e-20)
    power = power * target / torch.clamp((power @ fb.T) @ fb, min=1e-20)
    # offset keeps the sqrt gradient finite at zero power
    return torch.sqrt(power + 1e-12)


def _fb_tensor(cfg: MelConfig, dtype) -> torch.Tensor:
    return torch.tensor(mel_filterbank(cfg), dtype=dtype)


def istft(spec: torch.Tensor, cfg: MelConfig, length: int) -> torch.Tensor:
    """Inverse of :func:`stft` for ``(..., frames, bins)`` spectra with ``frames = ceil(length / hop)``."""
    frames = spec.shape[-2]
    full = 1 + length // cfg.hop
    if full > frames:
        spec = torch.cat([spec, spec[..., -1:, :].expand(*spec.shape[:-2], full - frames, spec.shape[-1])], -2)
    lead = spec.shape[:-2]
    flat = spec.reshape(-1, *spec.shape[-2:]).transpose(-1, -2)
    y = torch.istft(
        flat,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop,
        win_length=cfg.fft_size,
        window=_window(cfg.win, cfg.fft_size, flat.real),
        center=True,
        length=length,
    )
    return y.reshape(*lead, length)


def griffin_lim_phase(mag: torch.Tensor, cfg: MelConfig, iters: int, length: int) -> torch.Tensor:
    """Unit-modulus phase estimate for ``mag`` after ``iters`` Griffin-Lim rounds (zero init)."""
    phase = torch.ones_like(mag, dtype=torch.complex128 if mag.dtype == torch.float64 else torch.complex64)
    for _ in range(iters):
        y = istft(mag * phase, cfg, length)
        rebuilt = stft(y, cfg.fft_size, cfg.hop, cfg.win)
        phase = rebuilt / torch.clamp(rebuilt.abs(), min=1e-12)
    return phase


def griffin_lim(mel: MelSpectrogram, cfg: MelConfig, iters: int = 64) -> AudioBuffer:
    """Synthesize audio whose log-mel under ``cfg`` approximates ``mel``.

    Phase starts at zero. The returned waveform is the iterate with the lowest
    log-mel L1 error seen so far, so the error never increases with ``iters``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    values = np.asarray(mel.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("mel contains non-finite values")
    if values.shape[1] != cfg.n_mels:
        raise ValueError(f"mel has {values.shape[1]} bins, config expects {cfg.n_mels}")
    target = torch.from_numpy(values)
    length = values.shape[0] * cfg.hop
    with torch.no_grad():
        mag = mel_to_magnitude(target, cfg)
        phase = torch.ones_like(mag, dtype=torch.complex128)
        best, best_err = None, math.inf
        for _ in range(iters):
            y = istft(mag * phase, cfg, length)
            if length > cfg.fft_size // 2 and length >= cfg.win:
                err = float((log_mel_tensor(y.clamp(-1, 1), cfg) - target).abs().mean())
            else:
                err = 0.0
            if err <= best_err:
                best, best_err = y, err
            rebuilt = stft(y, cfg.fft_size, cfg.hop, cfg.win)
            phase = rebuilt / torch.clamp(rebuilt.abs(), min=1e-12)
    return AudioBuffer(best.clamp(-1.0, 1.0).numpy(), cfg.sample_rate)


# --- file formats -----------------------------------------------------------

MEL_MAGIC = b"SWMEL\0"
MEL_VERSION = 1
_MEL_HEADER = struct.Struct("<6sHII")


def read_wav(path) -> AudioBuffer:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: malformed WAV ({exc})") from exc
    if channels != 1:
        raise ValueError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise ValueError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz (resampling is not supported)")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(pcm, rate)


def write_wav(path, audio: AudioBuffer):
    if audio.sample_rate != SAMPLE_RATE:
        raise ValueError(f"only {SAMPLE_RATE} Hz output is supported")
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(audio.sample_rate)
        fh.writeframes(pcm.tobytes())


def write_mel(path, mel: MelSpectrogram):
    values = np.ascontiguousarray(mel.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MEL_HEADER.pack(MEL_MAGIC, MEL_VERSION, values.shape[0], values.shape[1]))
        fh.write(values.tobytes())


def read_mel(path, frame_rate: float = SAMPLE_RATE / 160) -> MelSpectrogram:
    data = Path(path).read_bytes()
    if len(data) < _MEL_HEADER.size:
        raise ValueError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, frames, n_mels = _MEL_HEADER.unpack_from(data)
    if magic != MEL_MAGIC:
        raise ValueError(f"{path}: bad magic at offset 0")
    if version != MEL_VERSION:
        raise ValueError(f"{path}: unsupported version {version} at offset 6")
    expected = _MEL_HEADER.size + 4 * frames * n_mels
    if len(data) != expected:
        raise ValueError(f"{path}: payload size mismatch, expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_MEL_HEADER.size).reshape(frames, n_mels)
    return MelSpectrogram(values=values.astype(np.float64), frame_rate=frame_rate)
