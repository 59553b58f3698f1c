"""End-to-end orchestration: image -> slicing -> encoding -> feature pyramid
-> token compression -> assembled tokens; plus the two reference projectors
(plain MLP on downsampled features, global resampler) kept surface-compatible
with the window-attention projector so outputs can be compared like for like.

Per-slice work is independent; with ``threads > 1`` slices are processed by
a thread pool and reassembled in slice order, so results are identical to
the serial run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderSpec, encode
from .image_io import Image, build_image_pyramid
from .numerics import bilinear_resize
from .slicing import SliceLayout, compute_slice_layout, extract_slices
from .token_org import AssembledTokens, assemble
from .vdim import FeaturePyramid, VdimParams, build_isp
from .window_attn import (
    AttnParams,
    HiwinConfig,
    TokenMap,
    compress,
    cross_attention,
    select_grid,
)

__all__ = [
    "PROJECTORS",
    "PipelineConfig",
    "PipelineResult",
    "baseline_mlp",
    "baseline_resampler",
    "init_mlp_weight",
    "project_tokens",
    "run_pipeline",
]

PROJECTORS = ("hiwin", "mlp", "resampler")


@dataclass
class PipelineConfig:
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    hiwin: HiwinConfig = field(default_factory=HiwinConfig)
    threads: int = 1
    max_slices: int = 6


@dataclass
class PipelineResult:
    tokens: AssembledTokens
    layout: SliceLayout
    grid: tuple[int, int]
    slice_maps: list[TokenMap]
    overview_map: TokenMap


def init_mlp_weight(channels: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(channels)
    return rng.uniform(-scale, scale, (channels, channels))


def baseline_mlp(isp: FeaturePyramid, n: int, weight: np.ndarray) -> TokenMap:
    """Reference projector: bilinearly downsample the finest level to N x N,
    then apply one linear map."""
    top = isp.levels[-1]
    small = bilinear_resize(top.data.astype(np.float64), n, n)
    out = small.reshape(n * n, -1) @ weight
    return TokenMap(out.reshape(n, n, -1).astype(np.float32), origin=isp.origin)


def baseline_resampler(
    isp: FeaturePyramid, params: AttnParams, config: HiwinConfig
) -> TokenMap:
    """Reference projector: every query attends over all pyramid features,
    with no windows and no spatial or level embeddings."""
    n = config.grid_side
    c = isp.channels
    feats = np.concatenate([f.data.reshape(-1, c) for f in isp.levels]).astype(np.float64)
    q = params.queries.reshape(n * n, c).astype(np.float64)
    out = cross_attention(q, feats, feats, params, config.heads)
    return TokenMap(out.reshape(n, n, c).astype(np.float32), origin=isp.origin)


def project_tokens(
    isp: FeaturePyramid,
    projector: str,
    attn: AttnParams,
    config: HiwinConfig,
    mlp_weight: np.ndarray | None = None,
) -> TokenMap:
    if projector == "hiwin":
        return compress(isp, attn, config)
    if projector == "mlp":
        if mlp_weight is None:
            mlp_weight = init_mlp_weight(config.channels, seed=0)
        return baseline_mlp(isp, config.grid_side, mlp_weight)
    if projector == "resampler":
        return baseline_resampler(isp, attn, config)
    raise ValueError(f"unknown projector {projector!r}; expected one of {PROJECTORS}")


def _unit_pyramid(image: Image, origin: str, vdim: VdimParams, config: PipelineConfig) -> FeaturePyramid:
    pyramid = build_image_pyramid(image, patch=config.encoder.patch, levels=len(vdim.levels) + 1)
    f0 = encode(image, config.encoder, origin=origin)
    return build_isp(f0, pyramid, vdim)


def run_pipeline(
    image: Image,
    vdim: VdimParams,
    attn: AttnParams,
    config: PipelineConfig,
    projector: str = "hiwin",
    mlp_weight: np.ndarray | None = None,
) -> PipelineResult:
    """Slice, encode, build pyramids, compress, and assemble one image."""
    layout = compute_slice_layout(image.width, image.height, config.max_slices)
    slices, overview = extract_slices(image, layout)
    units = [("overview", overview)] + [
        (f"slice:{i}", img) for i, img in enumerate(slices)
    ]

    def work(item: tuple[str, Image]) -> TokenMap:
        origin, img = item
        isp = _unit_pyramid(img, origin, vdim, config)
        return project_tokens(isp, projector, attn, config.hiwin, mlp_weight)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            maps = list(pool.map(work, units))
    else:
        maps = [work(u) for u in units]

    overview_map, slice_maps = maps[0], maps[1:]
    tokens = assemble(slice_maps, layout, overview_map)
    first = slices[0]
    grid = select_grid(
        first.width // config.encoder.patch,
        first.height // config.encoder.patch,
        config.hiwin.proposals,
    )
    return PipelineResult(
        tokens=tokens,
        layout=layout,
        grid=grid,
        slice_maps=slice_maps,
        overview_map=overview_map,
    )
