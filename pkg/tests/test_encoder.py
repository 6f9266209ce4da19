import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from swcodec import analysis
from swcodec.encoder import Encoder, ModelConfig, Stem, TransformerStack, sinusoidal_pe


def f64(*shape, seed=0):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(d_model=64, n_heads=5)

    def test_standard_restores_components(self):
        std = ModelConfig().standard()
        assert std.use_stem_gelu and std.use_abs_pe and std.d_model == ModelConfig().d_model

    def test_whisper_small_sizes(self):
        cfg = ModelConfig.whisper_small()
        assert (cfg.n_mels, cfg.d_model, cfg.n_layers, cfg.n_heads) == (80, 768, 12, 12)


class TestStem:
    @given(st.integers(0, 1000), st.floats(-2.0, 2.0))
    @settings(max_examples=15, deadline=None)
    def test_affine_without_gelu(self, seed, a):
        torch.manual_seed(seed)
        stem = Stem(ModelConfig()).double()
        x, y = f64(1, 30, 40, seed=seed), f64(1, 30, 40, seed=seed + 1)
        with torch.no_grad():
            err = (stem(a * x + (1 - a) * y) - (a * stem(x) + (1 - a) * stem(y))).abs().max()
        assert float(err) <= 1e-5

    def test_gelu_breaks_affinity(self):
        torch.manual_seed(0)
        stem = Stem(ModelConfig(use_stem_gelu=True)).double()
        with torch.no_grad():
            for p in stem.parameters():
                p.mul_(50)
            x, y = f64(1, 30, 40), f64(1, 30, 40, seed=1)
            err = (stem(0.3 * x + 0.7 * y) - (0.3 * stem(x) + 0.7 * stem(y))).abs().max()
        assert float(err) > 1e-3

    def test_halves_frames(self):
        out = Stem(ModelConfig())(torch.randn(2, 400, 40))
        assert out.shape == (2, 200, 64)

    def test_wrong_mel_count(self):
        with pytest.raises(ValueError, match="mel bins"):
            Stem(ModelConfig())(torch.randn(1, 10, 80))


class TestTransformer:
    @given(st.integers(0, 1000))
    @settings(max_examples=10, deadline=None)
    def test_permutation_equivariance_without_pe(self, seed):
        torch.manual_seed(seed)
        stack = TransformerStack(ModelConfig()).double()
        h = f64(1, 16, 64, seed=seed)
        perm = torch.randperm(16)
        with torch.no_grad():
            err = (stack(h[:, perm]).latent - stack(h).latent[:, perm]).abs().max()
        assert float(err) <= 1e-5

    def test_pe_breaks_equivariance(self):
        torch.manual_seed(0)
        stack = TransformerStack(ModelConfig(use_abs_pe=True)).double()
        h = f64(1, 16, 64)
        perm = torch.randperm(16)
        with torch.no_grad():
            err = (stack(h[:, perm]).latent - stack(h).latent[:, perm]).abs().max()
        assert float(err) > 1e-2

    def test_pe_table(self):
        pe = sinusoidal_pe(10, 8).numpy()
        assert pe[0, 0] == 0 and pe[0, 1] == 1
        np.testing.assert_allclose(pe[3, 2], np.sin(3 / 10000 ** (2 / 8)))
        np.testing.assert_allclose(pe[3, 3], np.cos(3 / 10000 ** (2 / 8)))

    def test_attention_maps_are_stochastic(self):
        enc = Encoder(ModelConfig())
        with torch.no_grad():
            out = enc(torch.randn(1, 100, 40))
        assert len(out.attn) == 2 and len(out.hidden) == 2
        for a in out.attn:
            assert a.shape == (1, 4, 50, 50)
            assert float((a.sum(-1) - 1).abs().max()) < 1e-6

    def test_repeated_input_without_pe_is_uniform(self):
        # identical frames cannot be told apart without positional information
        torch.manual_seed(0)
        stack = TransformerStack(ModelConfig()).double()
        h = f64(1, 1, 64).expand(1, 20, 64).contiguous()
        with torch.no_grad():
            attn = stack(h).attn
        for a in attn:
            assert analysis.diag_dominance(a) == pytest.approx(0.0, abs=1e-12)

    def test_forward_blocks_matches_forward(self):
        enc = Encoder(ModelConfig())
        mel = torch.randn(1, 40, 40)
        with torch.no_grad():
            a = enc(mel).latent
            b = enc.forward_blocks(enc.stem(mel)).latent
        assert torch.equal(a, b)
