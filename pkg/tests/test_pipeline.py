"""End-to-end runs, the reference projectors, and checkpoint round trips."""

import numpy as np
import pytest

from hiwin.checkpoint import load_checkpoint, save_checkpoint
from hiwin.encoder import EncoderSpec, FeatureMap
from hiwin.image_io import Image, synth_corpus
from hiwin.numerics import bilinear_resize
from hiwin.pipeline import (
    PipelineConfig,
    baseline_mlp,
    baseline_resampler,
    init_mlp_weight,
    project_tokens,
    run_pipeline,
)
from hiwin.token_org import flatten
from hiwin.vdim import DownsamplerParams, FeaturePyramid, VdimParams
from hiwin.window_attn import AttnParams, HiwinConfig


def small_config(channels=8, threads=1):
    return PipelineConfig(
        encoder=EncoderSpec(channels=channels, seed=0),
        hiwin=HiwinConfig(channels=channels),
        threads=threads,
    )


def constant_isp(value=0.4, channels=8, base=4):
    levels = [
        FeatureMap(
            np.full((base * 2**l, base * 2**l, channels), value, dtype=np.float32), level=l
        )
        for l in range(3)
    ]
    return FeaturePyramid(levels=levels)


class TestRunPipeline:
    def test_single_tile_token_count(self):
        img = synth_corpus(0, 1, 336)[0]
        config = small_config()
        result = run_pipeline(img, VdimParams.init(d_proj=8, seed=0), AttnParams.init(config.hiwin, seed=0), config)
        assert flatten(result.tokens).tokens.shape[0] == 288

    def test_landscape_token_count_and_grid(self):
        img = synth_corpus(1, 1, 336)[0]
        big = Image(bilinear_resize(img.pixels, 672, 1008))
        config = small_config()
        result = run_pipeline(big, VdimParams.init(d_proj=8, seed=0), AttnParams.init(config.hiwin, seed=0), config)
        assert (result.layout.cols, result.layout.rows) == (3, 2)
        assert result.grid == (3, 3)
        assert flatten(result.tokens).tokens.shape[0] == 1008

    def test_deterministic(self):
        img = synth_corpus(2, 1, 336)[0]
        config = small_config()
        vdim = VdimParams.init(d_proj=8, seed=1)
        attn = AttnParams.init(config.hiwin, seed=1)
        a = run_pipeline(img, vdim, attn, config)
        b = run_pipeline(img, vdim, attn, config)
        np.testing.assert_array_equal(a.tokens.global_map, b.tokens.global_map)
        np.testing.assert_array_equal(a.tokens.overview, b.tokens.overview)

    def test_threaded_matches_serial(self):
        img = synth_corpus(3, 1, 336)[0]
        big = Image(bilinear_resize(img.pixels, 672, 1008))
        vdim = VdimParams.init(d_proj=8, seed=2)
        serial_cfg = small_config()
        threaded_cfg = small_config(threads=4)
        attn = AttnParams.init(serial_cfg.hiwin, seed=2)
        a = run_pipeline(big, vdim, attn, serial_cfg)
        b = run_pipeline(big, vdim, attn, threaded_cfg)
        np.testing.assert_array_equal(a.tokens.global_map, b.tokens.global_map)
        np.testing.assert_array_equal(a.tokens.overview, b.tokens.overview)


class TestBaselines:
    def test_all_projectors_share_output_shape(self):
        isp = constant_isp()
        config = HiwinConfig(grid_side=4, channels=8)
        attn = AttnParams.init(config, seed=4)
        weight = init_mlp_weight(8, seed=4)
        shapes = {
            name: project_tokens(isp, name, attn, config, weight).data.shape
            for name in ("hiwin", "mlp", "resampler")
        }
        assert set(shapes.values()) == {(4, 4, 8)}

    def test_unknown_projector_rejected(self):
        with pytest.raises(ValueError):
            project_tokens(constant_isp(), "unknown", None, HiwinConfig(channels=8))

    def test_mlp_constant_isp(self):
        weight = init_mlp_weight(8, seed=5)
        out = baseline_mlp(constant_isp(0.4), 4, weight)
        want = (np.full(8, 0.4) @ weight).astype(np.float32)
        np.testing.assert_allclose(out.data, np.broadcast_to(want, (4, 4, 8)), atol=1e-6)

    def test_mlp_matches_downsample_then_matmul_oracle(self):
        rng = np.random.default_rng(6)
        levels = [
            FeatureMap(rng.standard_normal((4 * 2**l, 4 * 2**l, 8)).astype(np.float32), level=l)
            for l in range(3)
        ]
        isp = FeaturePyramid(levels=levels)
        weight = init_mlp_weight(8, seed=6)
        out = baseline_mlp(isp, 5, weight)
        small = bilinear_resize(levels[-1].data.astype(np.float64), 5, 5)
        want = small.reshape(25, 8) @ weight
        np.testing.assert_allclose(out.data.reshape(25, 8), want, atol=1e-6)

    def test_resampler_constant_isp_collapses(self):
        config = HiwinConfig(grid_side=4, channels=8)
        params = AttnParams.init(config, seed=7)
        out = baseline_resampler(constant_isp(0.4), params, config)
        v = np.full(8, 0.4) @ params.wv + params.bv
        want = (v @ params.wo + params.bo).astype(np.float32)
        np.testing.assert_allclose(out.data, np.broadcast_to(want, (4, 4, 8)), atol=1e-5)

    def test_resampler_single_query_hand_value(self):
        from hiwin.numerics import softmax

        config = HiwinConfig(grid_side=1, channels=4, heads=1)
        params = AttnParams.init(config, seed=8)
        levels = [
            FeatureMap(np.array([[[1.0, 0, 0, 0]]], dtype=np.float32), level=0),
            FeatureMap(np.full((2, 2, 4), 0.5, dtype=np.float32), level=1),
            FeatureMap(np.full((4, 4, 4), -0.5, dtype=np.float32), level=2),
        ]
        isp = FeaturePyramid(levels=levels)
        out = baseline_resampler(isp, params, config)
        feats = np.concatenate([l.data.reshape(-1, 4) for l in levels]).astype(np.float64)
        q = params.queries.reshape(1, 4) @ params.wq + params.bq
        k = feats @ params.wk + params.bk
        v = feats @ params.wv + params.bv
        att = softmax(q @ k.T / 2.0, axis=-1)
        want = (att @ v) @ params.wo + params.bo
        np.testing.assert_allclose(out.data.reshape(1, 4), want, atol=1e-5)


class TestCheckpoint:
    def test_roundtrip_preserves_params(self, tmp_path):
        vdim = VdimParams.init(d_proj=6, seed=9)
        down = DownsamplerParams.init(8, seed=9)
        config = HiwinConfig(channels=8)
        attn = AttnParams.init(config, seed=9)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, vdim, down, attn=attn, heads=config.heads)
        ckpt = load_checkpoint(path)
        assert ckpt.channels == 8
        assert ckpt.heads == 4
        np.testing.assert_allclose(ckpt.vdim.levels[0].proj_w, vdim.levels[0].proj_w, atol=1e-7)
        np.testing.assert_allclose(ckpt.down.levels[1].gamma, down.levels[1].gamma, atol=1e-7)
        np.testing.assert_allclose(ckpt.attn.queries, attn.queries, atol=1e-7)

    def test_attention_section_optional(self, tmp_path):
        vdim = VdimParams.init(d_proj=6, seed=10)
        down = DownsamplerParams.init(8, seed=10)
        path = tmp_path / "bare.ckpt"
        save_checkpoint(path, vdim, down)
        ckpt = load_checkpoint(path)
        assert ckpt.attn is None

    def test_save_is_deterministic(self, tmp_path):
        vdim = VdimParams.init(d_proj=6, seed=11)
        down = DownsamplerParams.init(8, seed=11)
        a = tmp_path / "a.ckpt"
        b = tmp_path / "b.ckpt"
        save_checkpoint(a, vdim, down)
        save_checkpoint(b, vdim, down)
        assert a.read_bytes() == b.read_bytes()
