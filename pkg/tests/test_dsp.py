import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from swcodec import dsp, synth
from swcodec.dsp import AudioBuffer, MelConfig


def sine(freq, seconds=1.0, amp=0.5, sr=16000):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


def direct_frame(x, t, fft_size, hop, win):
    """Oracle: windowed DFT of frame ``t`` of the centered signal."""
    padded = np.pad(x, fft_size // 2, mode="reflect")
    seg = padded[t * hop : t * hop + fft_size]
    w = np.zeros(fft_size)
    left = (fft_size - win) // 2
    w[left : left + win] = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
    return np.fft.rfft(seg * w)


class TestAudioBuffer:
    def test_rejects_clipping(self):
        with pytest.raises(ValueError, match="clips"):
            AudioBuffer(np.array([0.0, 1.5]))

    def test_rejects_non_finite_and_bad_rate(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.array([0.0, np.nan]))
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros(4), 0)

    def test_rejects_stereo(self):
        with pytest.raises(ValueError, match="mono"):
            AudioBuffer(np.zeros((2, 10)))


class TestMelConfig:
    @pytest.mark.parametrize("kw", [dict(hop=500), dict(win=600), dict(n_mels=0), dict(fmax=9000.0), dict(log_floor=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MelConfig(**kw)

    def test_frame_rate(self):
        assert MelConfig().frame_rate == 100.0


class TestStft:
    def test_zero_audio(self):
        spec = dsp.stft(np.zeros(4000), 512, 160, 400)
        assert torch.all(spec.abs() == 0)

    def test_sine_bin(self):
        mag = dsp.stft(sine(1000.0), 512, 160, 400).abs().numpy()
        interior = mag[3:-3]
        assert np.all(interior.argmax(1) == round(1000 * 512 / 16000))

    def test_matches_direct_dft(self, rng):
        x = rng.uniform(-0.5, 0.5, 3000)
        spec = dsp.stft(x, 512, 160, 400).numpy()
        for t in (2, 7, 11):
            np.testing.assert_allclose(spec[t], direct_frame(x, t, 512, 160, 400), atol=1e-9)

    def test_parseval(self, rng):
        x = rng.uniform(-0.5, 0.5, 4000)
        fft, hop, win = 512, 160, 400
        spec = dsp.stft(x, fft, hop, win).numpy()
        padded = np.pad(x, fft // 2, mode="reflect")
        w = np.zeros(fft)
        w[56 : 56 + win] = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
        for t in range(3, spec.shape[0] - 3):
            full = np.abs(spec[t, 0]) ** 2 + np.abs(spec[t, -1]) ** 2 + 2 * (np.abs(spec[t, 1:-1]) ** 2).sum()
            energy = fft * ((padded[t * hop : t * hop + fft] * w) ** 2).sum()
            assert abs(full - energy) / energy < 1e-4

    @given(st.floats(0.0, 10.0))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, a):
        x = np.random.default_rng(0).uniform(-0.1, 0.1, 2000)
        base = dsp.stft(x, 256, 64, 256).abs()
        np.testing.assert_allclose(dsp.stft(a * x, 256, 64, 256).abs(), a * base, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("n", [1000, 1601, 64000])
    def test_frame_count(self, n):
        assert dsp.stft(np.zeros(n), 512, 160, 400).shape[0] == -(-n // 160)

    def test_too_short(self):
        with pytest.raises(dsp.InputTooShortError, match="input too short"):
            dsp.stft(np.zeros(100), 512, 160, 400)


class TestLogMel:
    def test_zero_audio_at_floor(self):
        cfg = MelConfig()
        mel = dsp.log_mel(AudioBuffer(np.zeros(4000)), cfg)
        assert np.all(mel.values == np.log(cfg.log_floor))

    def test_filterbank_construction(self):
        cfg = MelConfig()
        fb = dsp.mel_filterbank(cfg)
        assert fb.shape == (40, 257)
        assert np.all(fb >= 0)
        freqs = np.linspace(0, 8000, 257)
        inside = (freqs > cfg.fmin) & (freqs < cfg.fmax)
        assert np.all(fb[:, inside].sum(0) > 0)

    def test_filterbank_area_normalized(self):
        fb = dsp.mel_filterbank(MelConfig(fft_size=4096, win=4096, hop=1024))
        df = 8000 / 2048
        areas = fb.sum(1) * df
        np.testing.assert_allclose(areas[5:], 1.0, rtol=0.02)

    def test_filterbank_is_cached_and_readonly(self):
        a, b = dsp.mel_filterbank(MelConfig()), dsp.mel_filterbank(MelConfig())
        assert a is b and not a.flags.writeable

    def test_amplitude_doubling(self, rng):
        x = rng.uniform(-0.2, 0.2, 8000)
        cfg = MelConfig()
        a = dsp.log_mel(AudioBuffer(x), cfg).values
        b = dsp.log_mel(AudioBuffer(2 * x), cfg).values
        np.testing.assert_allclose(b - a, 2 * np.log(2), atol=1e-3)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError, match="Hz"):
            dsp.log_mel(AudioBuffer(np.zeros(4000), 8000), MelConfig())


class TestMultiscale:
    def test_scales(self):
        mels = dsp.multiscale_mels(sine(300.0))
        assert len(mels) == 7
        assert [dsp.scale_config(k).fft_size for k in range(5, 12)] == [32, 64, 128, 256, 512, 1024, 2048]
        for k, m in zip(range(5, 12), mels):
            cfg = dsp.scale_config(k)
            assert m.n_mels == min(80, 2**k // 2)
            assert m.frames == -(-16000 // cfg.hop)

    def test_zero_audio(self):
        for m in dsp.multiscale_mels(AudioBuffer(np.zeros(4096))):
            assert np.all(m.values == np.log(1e-5))

    def test_pure(self):
        a = dsp.multiscale_mels(sine(440.0))
        b = dsp.multiscale_mels(sine(440.0))
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))

    def test_too_short(self):
        with pytest.raises(dsp.InputTooShortError):
            dsp.multiscale_mels(AudioBuffer(np.zeros(2047)))


class TestGriffinLim:
    cfg = MelConfig()

    def _error(self, audio, target):
        return np.abs(dsp.log_mel(audio, self.cfg).values - target.values).mean()

    @pytest.mark.parametrize("freq", [220.0, 500.0, 3000.0])
    def test_dominant_bin(self, freq):
        mel = dsp.log_mel(sine(freq), self.cfg)
        out = dsp.griffin_lim(mel, self.cfg, 32)
        mag = dsp.stft(out, 512, 160, 400).abs().numpy()
        assert np.median(mag[5:-5].argmax(1)) == round(freq * 512 / 16000)

    def test_monotone(self):
        mel = dsp.log_mel(synth.speech_like_chirp(), self.cfg)
        errs = [self._error(dsp.griffin_lim(mel, self.cfg, n), mel) for n in (1, 2, 4, 8, 16, 32)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))

    def test_chirp_round_trip_threshold(self):
        # threshold fixed at bring-up: measured 0.24 at 64 iterations
        mel = dsp.log_mel(synth.speech_like_chirp(), self.cfg)
        assert self._error(dsp.griffin_lim(mel, self.cfg, 64), mel) < 0.35

    def test_deterministic(self):
        mel = dsp.log_mel(sine(300.0, 0.5), self.cfg)
        a, b = dsp.griffin_lim(mel, self.cfg, 4), dsp.griffin_lim(mel, self.cfg, 4)
        assert np.array_equal(a.samples, b.samples)

    def test_rejects_non_finite(self):
        bad = dsp.MelSpectrogram(np.full((10, 40), np.nan), 100.0)
        with pytest.raises(ValueError, match="non-finite"):
            dsp.griffin_lim(bad, self.cfg)

    def test_silence(self):
        mel = dsp.log_mel(AudioBuffer(np.zeros(8000)), self.cfg)
        out = dsp.griffin_lim(mel, self.cfg, 2)
        assert np.abs(out.samples).max() < 1e-3


class TestFormats:
    def test_wav_round_trip(self, tmp_path):
        x = sine(440.0, 0.25)
        dsp.write_wav(tmp_path / "a.wav", x)
        y = dsp.read_wav(tmp_path / "a.wav")
        assert len(y) == len(x)
        assert np.abs(y.samples - x.samples).max() <= 1 / 32768

    def test_wav_wrong_rate(self, tmp_path):
        import wave

        with wave.open(str(tmp_path / "b.wav"), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(8000)
            fh.writeframes(b"\0\0" * 10)
        with pytest.raises(ValueError, match="8000"):
            dsp.read_wav(tmp_path / "b.wav")

    def test_mel_round_trip(self, tmp_path):
        mel = dsp.log_mel(sine(300.0, 0.3), MelConfig())
        dsp.write_mel(tmp_path / "m.swmel", mel)
        back = dsp.read_mel(tmp_path / "m.swmel")
        np.testing.assert_array_equal(back.values, mel.values.astype(np.float32))

    def test_mel_truncated(self, tmp_path):
        mel = dsp.log_mel(sine(300.0, 0.3), MelConfig())
        dsp.write_mel(tmp_path / "m.swmel", mel)
        data = (tmp_path / "m.swmel").read_bytes()
        (tmp_path / "m.swmel").write_bytes(data[:-3])
        with pytest.raises(ValueError, match="size mismatch"):
            dsp.read_mel(tmp_path / "m.swmel")
