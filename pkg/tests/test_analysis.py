import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swcodec import analysis, synth
from swcodec.analysis import PitchTrack
from swcodec.dsp import AudioBuffer
from swcodec.encoder import Encoder, ModelConfig


def tone(freq, seconds=1.0, sr=16000):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(0.5 * np.sin(2 * np.pi * freq * t), sr)


class TestDiagDominance:
    def test_identity_and_uniform(self):
        t = 6
        eye = torch.eye(t).expand(1, 3, t, t)
        assert analysis.diag_dominance(eye) == pytest.approx(1 - 1 / t)
        assert analysis.diag_dominance(torch.full((1, 3, t, t), 1 / t, dtype=torch.float64)) == pytest.approx(0.0, abs=1e-12)

    def test_layer_selection(self):
        maps = [torch.full((1, 2, 4, 4), 0.25), torch.eye(4).expand(1, 2, 4, 4)]
        assert analysis.diag_dominance(maps, 1) == pytest.approx(0.75)

    def test_head_relabeling(self, rng):
        a = torch.from_numpy(rng.dirichlet(np.ones(5), size=(1, 4, 5)))
        assert analysis.diag_dominance(a) == pytest.approx(analysis.diag_dominance(a[:, [2, 0, 3, 1]]), abs=1e-15)

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            analysis.diag_dominance(torch.ones(1, 1, 1, 1))


class TestRidge:
    def test_hand_system(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        w, b = analysis.ridge_fit(X, np.array([1.0, 2.0, 4.0]), 1.0)
        np.testing.assert_allclose(w, [3 / 8, 7 / 8], atol=1e-12)
        assert b == pytest.approx(1.5)

    def test_exact_recovery(self, rng):
        X = rng.normal(size=(40, 5))
        w_true = rng.normal(size=5)
        w, b = analysis.ridge_fit(X, X @ w_true - 2.0, 0.0)
        np.testing.assert_allclose(w, w_true, atol=1e-8)
        assert b == pytest.approx(-2.0, abs=1e-8)

    def test_large_penalty_predicts_mean(self, rng):
        X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
        w, b = analysis.ridge_fit(X, y, 1e12)
        assert np.abs(w).max() < 1e-9
        np.testing.assert_allclose(analysis.ridge_predict(X, w, b), y.mean(), atol=1e-8)

    def test_singular_at_zero_lambda(self):
        X = np.ones((5, 2))
        with pytest.raises(np.linalg.LinAlgError, match="lambda > 0"):
            analysis.ridge_fit(X, np.arange(5.0), 0.0)

    def test_column_reordering(self, rng):
        X, y = rng.normal(size=(30, 4)), rng.normal(size=30)
        perm = [3, 1, 0, 2]
        w, b = analysis.ridge_fit(X, y, 0.5)
        wp, bp = analysis.ridge_fit(X[:, perm], y, 0.5)
        np.testing.assert_allclose(wp, w[perm], atol=1e-12)
        np.testing.assert_allclose(analysis.ridge_predict(X[:, perm], wp, bp), analysis.ridge_predict(X, w, b), atol=1e-12)


class TestPearson:
    def test_linear(self):
        a = np.arange(10.0)
        assert analysis.pearson(a, 2 * a + 3) == pytest.approx(1.0)
        assert analysis.pearson(a, -a) == pytest.approx(-1.0)

    def test_hand_fixture(self):
        assert analysis.pearson([1, 2, 3, 4, 5], [2, 4, 5, 4, 5]) == pytest.approx(6 / np.sqrt(60))

    def test_zero_variance(self):
        with pytest.raises(ValueError, match="zero-variance"):
            analysis.pearson([1, 1, 1], [1, 2, 3])

    @given(
        arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
        arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
        st.floats(1e-3, 1e3),
        st.floats(-1e3, 1e3),
    )
    @settings(max_examples=60)
    def test_affine_invariance(self, a, b, scale, shift):
        if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
            return
        r = analysis.pearson(a, b)
        assert -1.0 <= r <= 1.0
        assert analysis.pearson(scale * a + shift, b) == pytest.approx(r, abs=1e-8)
        assert analysis.pearson(a, scale * b + shift) == pytest.approx(r, abs=1e-8)


class TestStoi:
    x = synth.syllable_sequence(11, 3.0)

    def test_self(self):
        assert analysis.stoi(self.x, self.x) == pytest.approx(1.0, abs=1e-6)

    def test_unrelated_noise(self):
        noise = np.random.default_rng(0).uniform(-0.5, 0.5, len(self.x))
        assert analysis.stoi(synth.speech_like_chirp(3.0), AudioBuffer(noise)) < 0.3

    def test_monotone_in_noise(self):
        n = np.random.default_rng(1).standard_normal(len(self.x))
        scores = [analysis.stoi(self.x, AudioBuffer(np.clip(self.x.samples + s * n, -1, 1))) for s in (0.01, 0.05, 0.2)]
        assert scores[0] >= scores[1] >= scores[2]

    def test_gain_invariance(self):
        n = np.random.default_rng(2).standard_normal(len(self.x)) * 0.05
        y = self.x.samples + n
        a = analysis.stoi(self.x, AudioBuffer(np.clip(y, -1, 1)))
        b = analysis.stoi(AudioBuffer(self.x.samples * 0.5), AudioBuffer(np.clip(y, -1, 1) * 0.5))
        assert a == pytest.approx(b, abs=1e-9)

    def test_matches_reference_implementation(self):
        pystoi = pytest.importorskip("pystoi")
        rng = np.random.default_rng(3)
        for snr in (10, 0, -5):
            n = rng.standard_normal(len(self.x))
            n *= np.std(self.x.samples) / np.std(n) * 10 ** (-snr / 20)
            y = np.clip(self.x.samples + n, -1, 1)
            ours = analysis.stoi(self.x, AudioBuffer(y))
            ref = pystoi.stoi(self.x.samples, y, 16000)
            assert ours == pytest.approx(ref, abs=1e-3)

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter than one"):
            analysis.stoi(tone(200, 0.2), tone(200, 0.2))

    def test_band_layout(self):
        obm, centers = analysis.third_octave_bands()
        assert obm.shape == (15, 257)
        assert centers[0] == 150.0 and centers[-1] == pytest.approx(150 * 2 ** (14 / 3))


class TestPitch:
    def test_pure_tone(self):
        track = analysis.extract_f0_synthetic(tone(220.0))
        f0 = track.f0[track.voiced]
        assert track.voiced.mean() > 0.9
        assert np.mean(np.abs(f0 - 220.0) <= 2.0) >= 0.95

    def test_silence(self):
        track = analysis.extract_f0(AudioBuffer(np.zeros(8000)))
        assert not track.voiced.any() and np.all(track.f0 == 0)

    def test_step(self):
        sr = 16000
        t = np.arange(sr) / sr
        f = np.where(t < 0.5, 220.0, 330.0)
        x = 0.5 * np.sin(2 * np.pi * np.cumsum(f) / sr)
        track = analysis.extract_f0(AudioBuffer(x))
        boundary = 50
        low = np.abs(track.f0 - 220) < 5
        high = np.abs(track.f0 - 330) < 5
        assert low[5 : boundary - 3].all() and high[boundary + 3 : -5].all()

    def test_vibrato_tracking(self):
        clip = synth.vibrato_clip(4)
        track = analysis.extract_f0(clip.audio)
        m = track.voiced & (track.times > 0.05) & (track.times < 1.95)
        assert np.abs(track.f0[m] - clip.f0(track.times[m])).max() < 5.0

    def test_track_invariants(self):
        with pytest.raises(ValueError):
            PitchTrack(np.array([100.0, 0.0]), np.array([True, True]), 100.0)

    def test_file_round_trip(self, tmp_path):
        track = PitchTrack(np.array([0.0, 120.5, 130.25]), np.array([False, True, True]), 100.0)
        analysis.write_f0(tmp_path / "f0.txt", track)
        back = analysis.read_f0(tmp_path / "f0.txt")
        np.testing.assert_allclose(back.f0, track.f0)
        assert np.array_equal(back.voiced, track.voiced) and back.frame_rate == pytest.approx(100.0)

    def test_file_malformed(self, tmp_path):
        (tmp_path / "f0.txt").write_text("0.0 100.0\n")
        with pytest.raises(ValueError, match=":1"):
            analysis.read_f0(tmp_path / "f0.txt")

    def test_resample_track(self):
        track = PitchTrack(np.arange(1.0, 11.0), np.ones(10, bool), 100.0)
        half = analysis.resample_track(track, 50.0)
        assert half.f0.tolist() == [1.0, 3.0, 5.0, 7.0, 9.0] and half.frame_rate == 50.0


class TestProbe:
    corpus = analysis.synthetic_pitch_corpus(n_utterances=5, seconds=1.0)

    def test_identity_control(self):
        rng = np.random.default_rng(0)
        lookup = {id(a): t for a, t in self.corpus}

        def feats(audio):
            f0 = lookup[id(audio)].f0
            return [(f0 + rng.normal(0, 0.1, f0.shape))[:, None], rng.normal(size=(len(f0), 3))]

        records = analysis.probe_f0(feats, self.corpus)
        assert [r.layer for r in records] == [1, 2]
        assert records[0].pcc > 0.99 and abs(records[1].pcc) < 0.5

    def test_encoder_curve(self):
        torch.manual_seed(0)
        feats = analysis.encoder_layer_features(Encoder(ModelConfig()).eval())
        records = analysis.probe_f0(feats, self.corpus)
        assert len(records) == 2 and all(-1 <= r.pcc <= 1 for r in records)
        assert all(r.n_frames == 50 for r in records)

    def test_no_voiced_frames(self):
        corpus = [(a, PitchTrack(t.f0 * 0, t.voiced & False, t.frame_rate)) for a, t in self.corpus]
        with pytest.raises(ValueError, match="voiced"):
            analysis.probe_f0(lambda a: [np.ones((50, 2))], corpus)

    def test_split(self):
        assert analysis.split_utterances(10) == (list(range(8)), [8, 9])
        assert analysis.split_utterances(2) == ([0], [1])
