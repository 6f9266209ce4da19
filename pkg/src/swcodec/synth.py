"""Deterministic synthetic signals used as fixtures and for pitch probing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import SAMPLE_RATE, AudioBuffer


@dataclass
class PitchedClip:
    audio: AudioBuffer
    f0: callable  # time in seconds -> Hz (0 where unvoiced)


def harmonic_tone(f0_track, sample_rate=SAMPLE_RATE, n_harmonics=10, amplitude=0.3, formants=(700.0, 1200.0, 2600.0)):
    """Harmonic complex following ``f0_track`` (Hz per sample) with a fixed formant envelope."""
    f0_track = np.asarray(f0_track, dtype=np.float64)
    phase = 2 * np.pi * np.cumsum(f0_track) / sample_rate
    out = np.zeros_like(f0_track)
    for h in range(1, n_harmonics + 1):
        freq = h * f0_track
        gain = sum(1.0 / (1.0 + ((freq - f) / 150.0) ** 2) for f in formants) + 0.05
        gain = np.where(freq < sample_rate / 2, gain, 0.0)
        out += gain * np.sin(h * phase)
    peak = np.abs(out).max()
    return amplitude * out / peak if peak else out


def vibrato_clip(seed: int, seconds=2.0, sample_rate=SAMPLE_RATE) -> PitchedClip:
    """Vowel-like tone with slow glide and vibrato, base pitch in 100-400 Hz."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(110.0, 300.0)
    glide = rng.uniform(-0.25, 0.25)
    rate, depth = rng.uniform(4.0, 7.0), rng.uniform(0.02, 0.06)

    def f0(t):
        t = np.asarray(t, dtype=np.float64)
        return base * (1 + glide * t / seconds) * (1 + depth * np.sin(2 * np.pi * rate * t))

    t = np.arange(int(seconds * sample_rate)) / sample_rate
    x = harmonic_tone(f0(t), sample_rate)
    fade = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.02)
    return PitchedClip(AudioBuffer(x * fade, sample_rate), f0)


def speech_like_chirp(seconds=1.0, sample_rate=SAMPLE_RATE, f_start=120.0, f_end=240.0):
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    f0 = f_start + (f_end - f_start) * t / seconds
    return AudioBuffer(harmonic_tone(f0, sample_rate, amplitude=0.5), sample_rate)


def syllable_sequence(seed: int, seconds=4.0, sample_rate=SAMPLE_RATE):
    """Alternating voiced syllables and short noisy gaps, a rough stand-in for speech."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    out = np.zeros(n)
    pos = 0
    while pos < n:
        dur = int(rng.uniform(0.12, 0.3) * sample_rate)
        seg = min(dur, n - pos)
        f0 = rng.uniform(100, 260) * (1 + 0.1 * np.linspace(-1, 1, seg) * rng.uniform(-1, 1))
        formants = tuple(rng.uniform(lo, hi) for lo, hi in ((300, 900), (900, 2200), (2200, 3200)))
        syl = harmonic_tone(f0, sample_rate, amplitude=rng.uniform(0.2, 0.5), formants=formants)
        ramp = np.minimum(1.0, np.minimum(np.arange(seg), seg - 1 - np.arange(seg)) / (0.01 * sample_rate))
        out[pos : pos + seg] = syl * ramp
        pos += seg
        gap = int(rng.uniform(0.02, 0.08) * sample_rate)
        noise = rng.standard_normal(min(gap, max(n - pos, 0))) * 0.01
        out[pos : pos + len(noise)] = noise
        pos += gap
    return AudioBuffer(np.clip(out, -1, 1), sample_rate)


def repeated_phrase(seconds_per_unit=0.5, pattern=(0, 1, 2, 3, 3, 2, 1, 0), sample_rate=SAMPLE_RATE, seed=7):
    """Units played in a mirrored order, like counting up then down."""
    rng = np.random.default_rng(seed)
    units = []
    n = int(seconds_per_unit * sample_rate)
    for _ in range(max(pattern) + 1):
        f0 = np.full(n, rng.uniform(110, 250))
        formants = tuple(rng.uniform(lo, hi) for lo, hi in ((300, 900), (900, 2200), (2200, 3200)))
        units.append(harmonic_tone(f0, sample_rate, amplitude=0.4, formants=formants))
    return AudioBuffer(np.concatenate([units[i] for i in pattern]), sample_rate)
