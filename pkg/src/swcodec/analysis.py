"""Measurement instruments: attention diagonal dominance, F0 probing, STOI."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.signal import resample_poly

from .dsp import AudioBuffer

# --- attention --------------------------------------------------------------------


def _to_numpy(a):
    if isinstance(a, torch.Tensor):
        return a.detach().double().cpu().numpy()
    return np.asarray(a, dtype=np.float64)


def head_average(attn) -> np.ndarray:
    """Average ``(..., heads, T, T)`` maps over every leading axis, giving ``(T, T)``."""
    a = _to_numpy(attn)
    return a.reshape(-1, *a.shape[-2:]).mean(0)


def diag_dominance(attn_maps, layer: int | None = None) -> float:
    """Mean diagonal attention mass in excess of the uniform baseline ``1/T``.

    ``attn_maps`` is either a single ``(..., heads, T, T)`` array or a per-layer
    list of them, in which case ``layer`` selects one.
    """
    a = attn_maps[layer] if layer is not None else attn_maps
    m = head_average(a)
    t = m.shape[-1]
    if t < 2:
        raise ValueError("diagonal dominance needs T >= 2")
    return float(np.trace(m) / t - 1.0 / t)


# --- regression and correlation ----------------------------------------------------


class SingularSystemError(np.linalg.LinAlgError):
    pass


def ridge_fit(x, y, lam: float = 1.0):
    """Closed-form ridge on centered data; returns ``(weights, bias)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError("ridge penalty must be >= 0")
    x_mean, y_mean = x.mean(0), y.mean(0)
    xc, yc = x - x_mean, y - y_mean
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    if lam == 0 and np.linalg.matrix_rank(gram) < x.shape[1]:
        raise SingularSystemError("singular normal equations at lambda=0; use lambda > 0")
    w = np.linalg.solve(gram, xc.T @ yc)
    return w, y_mean - x_mean @ w


def ridge_predict(x, weights, bias):
    return np.asarray(x, dtype=np.float64) @ weights + bias


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 2:
        raise ValueError("pearson needs two equal-length sequences of length >= 2")
    ac, bc = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(ac @ ac), np.sqrt(bc @ bc)
    if na == 0 or nb == 0:
        raise ValueError("pearson is undefined for zero-variance input")
    return float(np.clip((ac @ bc) / (na * nb), -1.0, 1.0))


# --- pitch ------------------------------------------------------------------------


@dataclass
class PitchTrack:
    f0: np.ndarray  # Hz, 0 where unvoiced
    voiced: np.ndarray  # bool
    frame_rate: float

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0.shape != self.voiced.shape:
            raise ValueError("f0 and voiced flags differ in length")
        if np.any(self.f0[self.voiced] <= 0):
            raise ValueError("voiced frames need F0 > 0")

    @property
    def times(self):
        return np.arange(len(self.f0)) / self.frame_rate


def extract_f0(audio: AudioBuffer, win_s=0.025, hop_s=0.010, fmin=60.0, fmax=500.0, threshold=0.5) -> PitchTrack:
    """Frame-wise F0 from the normalized autocorrelation peak; frame ``i`` is centered at ``i * hop``."""
    x = audio.samples
    sr = audio.sample_rate
    win, hop = int(round(win_s * sr)), int(round(hop_s * sr))
    min_lag, max_lag = int(sr / fmax), int(np.ceil(sr / fmin)) + 1
    n_frames = int(np.ceil(len(x) / hop))
    padded = np.pad(x, (win // 2, win + max_lag + 1))
    idx = np.arange(n_frames)[:, None] * hop + np.arange(win + max_lag + 1)[None]
    seg = padded[idx]
    seg = seg - seg[:, :win].mean(1, keepdims=True)
    head = seg[:, :win]
    e0 = (head**2).sum(1)
    lags = np.arange(min_lag, max_lag + 1)
    nccf = np.zeros((n_frames, lags.size))
    for j, lag in enumerate(lags):
        tail = seg[:, lag : lag + win]
        denom = np.sqrt(e0 * (tail**2).sum(1))
        nccf[:, j] = np.where(denom > 1e-10, (head * tail).sum(1) / np.maximum(denom, 1e-10), 0.0)
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        r = nccf[i]
        peak = r.max()
        if peak <= threshold or e0[i] < 1e-8:
            continue
        # earliest local maximum close to the global one avoids octave-down errors
        local = np.flatnonzero((r[1:-1] >= r[:-2]) & (r[1:-1] >= r[2:]) & (r[1:-1] >= 0.9 * peak)) + 1
        j = local[0] if local.size else int(r.argmax())
        shift = 0.0
        if 0 < j < r.size - 1:
            denom = r[j - 1] - 2 * r[j] + r[j + 1]
            if denom < 0:
                shift = 0.5 * (r[j - 1] - r[j + 1]) / denom
        f0[i] = sr / (lags[j] + shift)
        voiced[i] = True
    return PitchTrack(f0, voiced, sr / hop)


extract_f0_synthetic = extract_f0


def resample_track(track: PitchTrack, frame_rate: float) -> PitchTrack:
    """Nearest-frame resampling onto a new frame rate (e.g. 100 Hz pitch to 50 Hz features)."""
    if frame_rate == track.frame_rate:
        return track
    n = int(np.floor(len(track.f0) * frame_rate / track.frame_rate))
    src = np.minimum(np.round(np.arange(n) * track.frame_rate / frame_rate).astype(int), len(track.f0) - 1)
    return PitchTrack(track.f0[src], track.voiced[src], frame_rate)


def write_f0(path, track: PitchTrack):
    with open(path, "w") as fh:
        for t, f, v in zip(track.times, track.f0, track.voiced):
            fh.write(f"{t:.6f} {f:.4f} {int(v)}\n")


def read_f0(path) -> PitchTrack:
    """Parse ``time_sec f0_hz voiced_flag`` lines; frame rate comes from the time step."""
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{n}: expected 'time_sec f0_hz voiced_flag'")
        rows.append((float(parts[0]), float(parts[1]), int(parts[2])))
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two frames")
    arr = np.array(rows)
    step = np.diff(arr[:, 0]).mean()
    return PitchTrack(arr[:, 1], arr[:, 2] > 0, 1.0 / step)


# --- probing -------------------------------------------------------------------------


@dataclass
class ProbeRecord:
    layer: int
    pcc: float
    n_frames: int


def split_utterances(n: int, train_fraction: float = 0.8):
    cut = max(1, min(n - 1, int(round(n * train_fraction))))
    return list(range(cut)), list(range(cut, n))


def probe_f0(layer_features, dataset, lam: float = 1.0, train_fraction: float = 0.8) -> list[ProbeRecord]:
    """Per-layer ridge probes from hidden features to voiced-frame F0.

    ``layer_features(audio)`` returns a list of ``(frames, dim)`` arrays, one per
    layer, at the pitch tracks' frame rate. ``dataset`` is a list of
    ``(AudioBuffer, PitchTrack)``. The first ``train_fraction`` of utterances
    train the probe; the rest are scored with Pearson correlation.
    """
    if len(dataset) < 2:
        raise ValueError("probing needs at least two utterances")
    feats, tracks = [], []
    for audio, track in dataset:
        layers = [np.asarray(_to_numpy(f)) for f in layer_features(audio)]
        n = min(len(track.f0), *(len(f) for f in layers))
        feats.append([f[:n] for f in layers])
        tracks.append((track.f0[:n], track.voiced[:n]))
    train, test = split_utterances(len(dataset), train_fraction)

    def gather(ids, layer):
        x = np.concatenate([feats[i][layer][tracks[i][1]] for i in ids])
        y = np.concatenate([tracks[i][0][tracks[i][1]] for i in ids])
        return x, y

    records = []
    for layer in range(len(feats[0])):
        x_tr, y_tr = gather(train, layer)
        x_te, y_te = gather(test, layer)
        if len(y_tr) == 0 or len(y_te) == 0:
            raise ValueError("no voiced frames to probe")
        mu, sd = x_tr.mean(0), x_tr.std(0)
        sd[sd == 0] = 1.0
        w, b = ridge_fit((x_tr - mu) / sd, y_tr, lam)
        pred = ridge_predict((x_te - mu) / sd, w, b)
        records.append(ProbeRecord(layer + 1, pearson(pred, y_te), int(len(y_te))))
    return records


def synthetic_pitch_corpus(n_utterances=10, seconds=2.0, frame_rate=50.0, seed=0):
    """Vibrato tones with analytic F0 sampled at the feature frame times."""
    from .synth import vibrato_clip

    corpus = []
    for i in range(n_utterances):
        clip = vibrato_clip(seed + i, seconds)
        t = np.arange(int(np.ceil(seconds * frame_rate))) / frame_rate
        corpus.append((clip.audio, PitchTrack(clip.f0(t), np.ones(t.size, dtype=bool), frame_rate)))
    return corpus


def repeated_phrase_fixture() -> AudioBuffer:
    from .synth import repeated_phrase

    return repeated_phrase()


def encoder_layer_features(encoder):
    """Adapter returning one ``(frames, d_model)`` array per transformer block."""
    from . import dsp

    mel_cfg = dsp.MelConfig(n_mels=encoder.cfg.n_mels)
    dtype = next(encoder.parameters()).dtype

    @torch.no_grad()
    def features(audio):
        mel = dsp.log_mel(audio, mel_cfg)
        out = encoder(torch.from_numpy(mel.values).to(dtype)[None])
        return [h[0].double().numpy() for h in out.hidden]

    return features


# --- STOI ---------------------------------------------------------------------------

STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames, 384 ms at 10 kHz with hop 128
STOI_BETA = -15.0
STOI_DYN_RANGE = 40.0
_EPS = np.finfo(np.float64).eps


def third_octave_bands(fs=STOI_FS, nfft=STOI_NFFT, n_bands=STOI_BANDS, min_freq=STOI_MIN_FREQ):
    """Binary band matrix ``(n_bands, nfft/2+1)`` and the band center frequencies."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands)
    centers = min_freq * 2.0 ** (k / 3)
    low = min_freq * 2.0 ** ((2 * k - 1) / 6)
    high = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, f.size))
    for i in range(n_bands):
        lo = int(np.argmin((f - low[i]) ** 2))
        hi = int(np.argmin((f - high[i]) ** 2))
        obm[i, lo:hi] = 1.0
    return obm, centers


def _frames(x, size, hop):
    w = np.hanning(size + 2)[1:-1]
    starts = range(0, len(x) - size, hop)
    return np.array([w * x[s : s + size] for s in starts]).reshape(-1, size)


def _overlap_add(frames, hop):
    n, size = frames.shape
    out = np.zeros((n - 1) * hop + size) if n else np.zeros(0)
    for i, fr in enumerate(frames):
        out[i * hop : i * hop + size] += fr
    return out


def _drop_silent(x, y, dyn_range=STOI_DYN_RANGE, size=STOI_FRAME, hop=STOI_FRAME // 2):
    xf, yf = _frames(x, size, hop), _frames(y, size, hop)
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = (energy.max() - dyn_range - energy) < 0
    return _overlap_add(xf[keep], hop), _overlap_add(yf[keep], hop)


def _band_envelopes(x, obm):
    spec = np.fft.rfft(_frames(x, STOI_FRAME, STOI_FRAME // 2), n=STOI_NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # bands x frames


def stoi(ref: AudioBuffer, deg: AudioBuffer) -> float:
    """Short-time objective intelligibility between a reference and a degraded signal."""
    if ref.sample_rate != deg.sample_rate:
        raise ValueError("reference and degraded signals must share a sample rate")
    n = min(len(ref), len(deg))
    x, y = ref.samples[:n], deg.samples[:n]
    if ref.sample_rate != STOI_FS:
        g = np.gcd(int(ref.sample_rate), STOI_FS)
        x = resample_poly(x, STOI_FS // g, ref.sample_rate // g)
        y = resample_poly(y, STOI_FS // g, ref.sample_rate // g)
    x, y = _drop_silent(x, y)
    obm, _ = third_octave_bands()
    if len(x) <= STOI_FRAME:
        raise ValueError("signal shorter than one STOI analysis segment (384 ms of non-silent audio)")
    x_env, y_env = _band_envelopes(x, obm), _band_envelopes(y, obm)
    if x_env.shape[1] < STOI_SEGMENT:
        raise ValueError("signal shorter than one STOI analysis segment (384 ms of non-silent audio)")
    idx = np.arange(STOI_SEGMENT, x_env.shape[1] + 1)
    xs = np.stack([x_env[:, m - STOI_SEGMENT : m] for m in idx])  # segments x bands x frames
    ys = np.stack([y_env[:, m - STOI_SEGMENT : m] for m in idx])
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10 ** (-STOI_BETA / 20)
    yp = np.minimum(ys * scale, xs * (1 + clip))
    yp = yp - yp.mean(2, keepdims=True)
    xc = xs - xs.mean(2, keepdims=True)
    yp /= np.linalg.norm(yp, axis=2, keepdims=True) + _EPS
    xc /= np.linalg.norm(xc, axis=2, keepdims=True) + _EPS
    return float((yp * xc).sum() / (xs.shape[0] * xs.shape[1]))
