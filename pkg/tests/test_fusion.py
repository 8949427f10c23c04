"""Caption sampling formula, fusion linearity, token assembly."""

import numpy as np
import pytest

from sumkit import autodiff as ad
from sumkit.autodiff import Tensor
from sumkit.config import Config
from sumkit.errors import ConfigError, UsageError
from sumkit.fusion import (
    FusionParams,
    fuse_text,
    init_fusion_params,
    sample_caption_indices,
    sample_captions,
    text_tokens_for_attention,
)
from sumkit.optim import finite_diff_check


def small_cfg(**kw):
    base = dict(embed_dim=8, m_fixed=3, lga_heads=2, tf_heads=2,
                tf_enc_layers=1, tf_dec_layers=1, window_len=16)
    base.update(kw)
    return Config(**base).validate()


class TestSampleCaptions:
    def test_identity_when_counts_match(self):
        assert sample_caption_indices(7, 7) == list(range(7))

    def test_thirteen_to_seven(self):
        assert sample_caption_indices(13, 7) == [0, 2, 4, 6, 8, 10, 12]

    def test_upsampling_repeats_by_formula(self):
        # round(j*(M-1)/(m_fixed-1)) evaluated for M=3, m_fixed=7
        expected = [round(j * 2 / 6) for j in range(7)]
        assert sample_caption_indices(3, 7) == expected == [0, 0, 1, 1, 1, 2, 2]

    def test_single_fixed_slot(self):
        assert sample_caption_indices(5, 1) == [0]

    def test_invalid_m_fixed(self):
        with pytest.raises(ConfigError):
            sample_caption_indices(5, 0)

    def test_deterministic_and_idempotent(self):
        rng = np.random.default_rng(0)
        caps = rng.normal(size=(7, 4)).astype(np.float32)
        once = sample_captions(caps, 7)
        np.testing.assert_array_equal(once, caps)
        np.testing.assert_array_equal(sample_captions(once, 7), once)


class TestFuseText:
    def test_zero_params_yield_bias(self):
        cfg = small_cfg()
        params = FusionParams(weight=ad.parameter(np.zeros((3 * 8, 8))),
                              bias=ad.parameter(np.full((1, 8), 0.25)))
        out = fuse_text(Tensor(np.ones((3, 8))), params)
        np.testing.assert_allclose(out.data, 0.25)

    def test_identity_map_single_caption(self):
        params = FusionParams(weight=ad.parameter(np.eye(8)),
                              bias=ad.parameter(np.zeros((1, 8))))
        row = np.arange(8, dtype=np.float32)[None, :]
        out = fuse_text(Tensor(row), params)
        np.testing.assert_allclose(out.data, row, atol=1e-6)

    def test_linearity(self):
        cfg = small_cfg()
        rng = np.random.default_rng(4)
        params = init_fusion_params(cfg, rng)
        params.bias.data[:] = rng.normal(size=params.bias.shape).astype(np.float32)
        x = rng.normal(size=(3, 8)).astype(np.float32)
        y = rng.normal(size=(3, 8)).astype(np.float32)
        a, b = 0.7, -1.3
        lhs = fuse_text(Tensor(a * x + b * y), params).data
        rhs = (a * fuse_text(Tensor(x), params).data
               + b * fuse_text(Tensor(y), params).data
               - (a + b - 1) * params.bias.data)
        np.testing.assert_allclose(lhs, rhs, atol=1e-4)

    def test_gradient_matches_central_differences(self):
        cfg = small_cfg()
        rng = np.random.default_rng(5)
        params = init_fusion_params(cfg, rng)
        sampled = Tensor(rng.normal(size=(3, 8)))
        named = params.named()

        def f(_):
            out = fuse_text(sampled, params)
            return ad.mean_all(ad.mul(out, out))

        assert finite_diff_check(f, named, seed=1) < 1e-3


class TestTextTokens:
    def test_query_row_passes_through(self):
        cfg = small_cfg()
        params = init_fusion_params(cfg, np.random.default_rng(0))
        q = np.random.default_rng(1).normal(size=(1, 8)).astype(np.float32)
        out = text_tokens_for_attention(q, "query", params, cfg, mode="query")
        np.testing.assert_array_equal(out.data, q)

    def test_generic_token_count(self):
        cfg = small_cfg(m_fixed=7)
        params = init_fusion_params(cfg, np.random.default_rng(0))
        caps = np.random.default_rng(2).normal(size=(7, 8)).astype(np.float32)
        out = text_tokens_for_attention(caps, "captions", params, cfg, mode="generic")
        assert out.shape == (8, 8)

    def test_fused_only_collapses_to_one_token(self):
        cfg = small_cfg(m_fixed=7, fused_only=True)
        params = init_fusion_params(cfg, np.random.default_rng(0))
        caps = np.random.default_rng(2).normal(size=(7, 8)).astype(np.float32)
        out = text_tokens_for_attention(caps, "captions", params, cfg, mode="generic")
        assert out.shape == (1, 8)

    def test_kind_mode_mismatch(self):
        cfg = small_cfg()
        params = init_fusion_params(cfg, np.random.default_rng(0))
        with pytest.raises(UsageError):
            text_tokens_for_attention(np.zeros((3, 8), dtype=np.float32), "captions",
                                      params, cfg, mode="query")
        with pytest.raises(UsageError):
            text_tokens_for_attention(np.zeros((1, 8), dtype=np.float32), "query",
                                      params, cfg, mode="generic")

    def test_caption_permutation_only_reaches_output_via_fused_token(self):
        # with a constant fused token, attention sees a permuted key set only,
        # so the attended frames are unchanged
        from sumkit.attention import init_lga_params, language_guided_attention
        from sumkit.autodiff import Tensor

        cfg = small_cfg(m_fixed=3)
        rng = np.random.default_rng(9)
        params = init_fusion_params(cfg, rng)
        params.weight.data[:] = 0.0  # fused token = bias, order independent
        params.bias.data[:] = rng.normal(size=params.bias.shape).astype(np.float32)
        lga = init_lga_params(cfg, rng)
        frames = Tensor(rng.normal(size=(5, 8)))
        caps = rng.normal(size=(3, 8)).astype(np.float32)
        perm = np.array([2, 0, 1])
        out_a = language_guided_attention(
            frames, text_tokens_for_attention(caps, "captions", params, cfg, "generic"),
            lga).data
        out_b = language_guided_attention(
            frames, text_tokens_for_attention(caps[perm], "captions", params, cfg, "generic"),
            lga).data
        np.testing.assert_allclose(out_a, out_b, atol=1e-5)

        # with a live fused map the permutation leaks through the fused token
        params.weight.data[:] = rng.normal(size=params.weight.shape).astype(np.float32) * 0.2
        out_c = language_guided_attention(
            frames, text_tokens_for_attention(caps, "captions", params, cfg, "generic"),
            lga).data
        out_d = language_guided_attention(
            frames, text_tokens_for_attention(caps[perm], "captions", params, cfg, "generic"),
            lga).data
        assert not np.allclose(out_c, out_d, atol=1e-5)
