import numpy as np
import pytest
import torch

from swcodec import dsp, synth
from swcodec.decoder import Decoder, differentiable_synthesis
from swcodec.encoder import ModelConfig
from swcodec.model import Codec


@pytest.fixture(scope="module")
def codec():
    torch.manual_seed(0)
    return Codec().eval()


class TestDecoder:
    def test_doubles_frames_and_trims(self):
        dec = Decoder(ModelConfig())
        assert dec(torch.randn(1, 25, 64)).shape == (1, 50, 40)
        assert dec(torch.randn(1, 25, 64), 49).shape == (1, 49, 40)

    def test_output_above_floor(self):
        dec = Decoder(ModelConfig())
        with torch.no_grad():
            for p in dec.parameters():
                p.mul_(200)
            mel = dec(torch.randn(1, 10, 64) * 10)
        assert torch.isfinite(mel).all() and float(mel.min()) >= np.log(1e-5)

    def test_wrong_width(self):
        with pytest.raises(ValueError, match="dim"):
            Decoder(ModelConfig())(torch.randn(1, 4, 32))


class TestCodec:
    def test_encode_decode_lengths(self, codec):
        audio = synth.syllable_sequence(1, 4.0)
        grid = codec.encode_audio(audio)
        assert grid.indices.shape == (50, 8) and grid.original_frames == 200
        mel = codec.decode_codes(grid)
        assert mel.frames == 400 and mel.frame_rate == 100.0
        out = codec.synthesize(mel, iters=4)
        assert abs(len(out) - len(audio)) <= 160

    def test_non_multiple_length(self, codec):
        audio = synth.syllable_sequence(2, 1.23)
        grid = codec.encode_audio(audio)
        mel = codec.decode_codes(grid)
        assert mel.frames == 2 * grid.original_frames
        assert abs(mel.frames - dsp.MelConfig().n_frames(len(audio))) <= 1

    def test_latent_rate(self, codec):
        lat = codec.encode_latent(synth.syllable_sequence(1, 1.0))
        assert lat.frame_rate == 50.0 and lat.frames == 50 and lat.dim == 64

    def test_codes_in_range_and_deterministic(self, codec):
        audio = synth.syllable_sequence(3, 2.0)
        a, b = codec.encode_audio(audio), codec.encode_audio(audio)
        assert np.array_equal(a.indices, b.indices)
        assert a.indices.min() >= 0 and a.indices.max() < 2016

    def test_frozen_encoder_gets_no_gradient(self):
        codec = Codec(ModelConfig(frozen_encoder=True))
        out = codec(torch.randn(1, 16000) * 0.1)
        out.mel_hat.sum().backward()
        assert all(p.grad is None for p in codec.encoder.parameters())
        assert any(p.grad is not None for p in codec.decoder.parameters())

    def test_mel_config_must_match(self):
        with pytest.raises(ValueError, match="bins"):
            Codec(ModelConfig(), mel_cfg=dsp.MelConfig(n_mels=80))


class TestSynthesis:
    def test_differentiable_path(self):
        cfg = dsp.MelConfig()
        mel = dsp.log_mel(synth.speech_like_chirp(0.5), cfg)
        m = torch.from_numpy(mel.values)[None].requires_grad_(True)
        y = differentiable_synthesis(m, cfg, 8000, 4)
        assert y.shape == (1, 8000)
        (y**2).sum().backward()
        assert torch.isfinite(m.grad).all() and float(m.grad.abs().sum()) > 0

    def test_matches_target_spectrum(self):
        cfg = dsp.MelConfig()
        mel = dsp.log_mel(synth.speech_like_chirp(0.5), cfg)
        with torch.no_grad():
            y = differentiable_synthesis(torch.from_numpy(mel.values)[None], cfg, 8000, 16)
        back = dsp.log_mel(dsp.AudioBuffer(y[0].clamp(-1, 1).numpy()), cfg)
        assert np.abs(back.values - mel.values).mean() < 0.6
