"""Visual detail injection: trainable guided upsampling of feature maps, the
attention downsampler used for self-supervision, the multi-level
reconstruction loss, and the training loop that fits both.

Guided upsampling doubles a feature map's resolution by bilinearly lifting
it to the target grid and re-averaging each output cell over its 7x7
neighborhood.  Neighbor weights combine a Gaussian spatial decay
``exp(-|dxy|^2 / (2 sigma_dist^2))`` with a guidance-similarity softmax over
the window: pixels of the guidance image are projected by a learned linear
map, and neighbor scores are the projected dot products scaled by
``1 / sigma_sim^2``.  The combined weight is renormalized to sum to 1 per
output cell, so constant inputs pass through exactly.

The downsampler inverts the scale change for training: the high level is
bilinearly lifted to full image resolution, split into 14x14 windows (one
per base-level cell), and each window is reduced by a saliency-weighted
average (1x1 conv saliency, softmax over the window, learnable per-channel
affine on the features).  The reconstruction loss is half the sum over
levels of the mean squared difference between each level's reduction and the
base map.

Both sigma parameters are stored in log space so their effective values stay
strictly positive.  Training runs entirely in float64; stored feature maps
remain float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Tensor
from .encoder import EncoderSpec, FeatureMap, encode
from .image_io import Image, ImagePyramid, build_image_pyramid
from .numerics import AdamState, adam_step, resize_matrix

__all__ = [
    "DownsamplerParams",
    "FeaturePyramid",
    "LevelDown",
    "LevelKernel",
    "TrainResult",
    "VdimParams",
    "attention_downsample",
    "build_isp",
    "jbu_kernel_weights",
    "jbu_upsample",
    "mlr_loss",
    "mlr_objective",
    "pretrain_vdim",
    "trainable_arrays",
]


@dataclass
class LevelKernel:
    """Guided-upsampling weights for one pyramid step."""

    proj_w: np.ndarray  # (3, d_proj) guidance projection
    proj_b: np.ndarray  # (d_proj,)
    log_sigma_dist: np.ndarray  # () spatial decay width, log space
    log_sigma_sim: np.ndarray  # () similarity temperature, log space

    @property
    def sigma_dist(self) -> float:
        return float(np.exp(self.log_sigma_dist))

    @property
    def sigma_sim(self) -> float:
        return float(np.exp(self.log_sigma_sim))


@dataclass
class VdimParams:
    """Per-level guided-upsampling kernels; ``levels[l]`` produces level l+1."""

    levels: list[LevelKernel]
    radius: int = 3  # 7x7 neighborhood

    @property
    def d_proj(self) -> int:
        return self.levels[0].proj_w.shape[1]

    @classmethod
    def init(cls, d_proj: int = 32, seed: int = 0, radius: int = 3, levels: int = 2) -> "VdimParams":
        rng = np.random.default_rng(seed)
        kernels = [
            LevelKernel(
                proj_w=rng.uniform(-0.5, 0.5, (3, d_proj)),
                proj_b=rng.uniform(-0.1, 0.1, d_proj),
                log_sigma_dist=np.zeros(()),
                log_sigma_sim=np.zeros(()),
            )
            for _ in range(levels)
        ]
        return cls(levels=kernels, radius=radius)


@dataclass
class LevelDown:
    """Attention-downsampler weights for one level: per-channel affine plus
    a scalar-saliency 1x1 conv."""

    gamma: np.ndarray  # (C,)
    beta: np.ndarray  # (C,)
    sal_w: np.ndarray  # (C,)
    sal_b: np.ndarray  # ()


@dataclass
class DownsamplerParams:
    """Per-level downsampler weights; ``levels[l-1]`` reduces level l."""

    levels: list[LevelDown]
    patch: int = 14

    @property
    def channels(self) -> int:
        return self.levels[0].gamma.shape[0]

    @classmethod
    def init(cls, channels: int, seed: int = 0, levels: int = 2, patch: int = 14) -> "DownsamplerParams":
        rng = np.random.default_rng(seed)
        downs = [
            LevelDown(
                gamma=np.ones(channels),
                beta=np.zeros(channels),
                sal_w=rng.uniform(-0.1, 0.1, channels),
                sal_b=np.zeros(()),
            )
            for _ in range(levels)
        ]
        return cls(levels=downs, patch=patch)


@dataclass
class FeaturePyramid:
    """Inverse semantic pyramid: feature maps whose dims double per level."""

    levels: list[FeatureMap]
    origin: str = "overview"

    def __post_init__(self):
        for lo, hi in zip(self.levels, self.levels[1:]):
            if (hi.height, hi.width) != (2 * lo.height, 2 * lo.width):
                raise ValueError("pyramid level dims must double at every step")
            if hi.channels != lo.channels:
                raise ValueError("pyramid levels must share a channel count")

    @property
    def channels(self) -> int:
        return self.levels[0].channels


class _Kernel(NamedTuple):
    proj_w: Tensor
    proj_b: Tensor
    log_sigma_dist: Tensor
    log_sigma_sim: Tensor


class _Down(NamedTuple):
    gamma: Tensor
    beta: Tensor
    sal_w: Tensor
    sal_b: Tensor


def trainable_arrays(
    vdim: VdimParams, down: DownsamplerParams
) -> list[tuple[str, np.ndarray]]:
    """All trainable parameters in their canonical (checkpoint) order."""
    out = []
    for i, lk in enumerate(vdim.levels, start=1):
        out += [
            (f"upsample{i}.proj_w", lk.proj_w),
            (f"upsample{i}.proj_b", lk.proj_b),
            (f"upsample{i}.log_sigma_dist", lk.log_sigma_dist),
            (f"upsample{i}.log_sigma_sim", lk.log_sigma_sim),
        ]
    for i, ld in enumerate(down.levels, start=1):
        out += [
            (f"down{i}.gamma", ld.gamma),
            (f"down{i}.beta", ld.beta),
            (f"down{i}.sal_w", ld.sal_w),
            (f"down{i}.sal_b", ld.sal_b),
        ]
    return out


def _wrap_params(
    vdim: VdimParams, down: DownsamplerParams, trainable: bool
) -> tuple[list[_Kernel], list[_Down], list[Tensor]]:
    kernels, downs, flat = [], [], []
    for lk in vdim.levels:
        ts = tuple(
            Tensor(a, requires_grad=trainable)
            for a in (lk.proj_w, lk.proj_b, lk.log_sigma_dist, lk.log_sigma_sim)
        )
        kernels.append(_Kernel(*ts))
        flat.extend(ts)
    for ld in down.levels:
        ts = tuple(
            Tensor(a, requires_grad=trainable)
            for a in (ld.gamma, ld.beta, ld.sal_w, ld.sal_b)
        )
        downs.append(_Down(*ts))
        flat.extend(ts)
    return kernels, downs, flat


def _offset_dist2(radius: int) -> np.ndarray:
    """Squared center offsets in the row-major order used by ad.neighborhood."""
    k = 2 * radius + 1
    d = np.arange(k, dtype=np.float64) - radius
    dy, dx = np.meshgrid(d, d, indexing="ij")
    return (dy * dy + dx * dx).reshape(-1)


def _kernel_weights_graph(guide: np.ndarray, kern: _Kernel, radius: int) -> Tensor:
    """Combined, renormalized neighbor weights (gh, gw, K) for one level."""
    gh, gw, _ = guide.shape
    d_proj = kern.proj_w.data.shape[1]
    proj = ad.add(ad.matmul(Tensor(guide.reshape(-1, 3)), kern.proj_w), kern.proj_b)
    proj = ad.reshape(proj, (gh, gw, d_proj))
    nb_proj = ad.neighborhood(proj, radius)
    sigma_sim = ad.exp(kern.log_sigma_sim)
    logits = ad.div(ad.dotk(proj, nb_proj), ad.mul(sigma_sim, sigma_sim))
    sim_w = ad.softmax(logits, axis=-1)
    sigma_dist = ad.exp(kern.log_sigma_dist)
    spatial = ad.exp(
        ad.div(Tensor(-0.5 * _offset_dist2(radius)), ad.mul(sigma_dist, sigma_dist))
    )
    w = ad.mul(sim_w, spatial)
    return ad.div(w, ad.tsum(w, axis=-1, keepdims=True))


def _guided_upsample_graph(
    feats: Tensor, guide: np.ndarray, kern: _Kernel, radius: int
) -> Tensor:
    h, w = feats.data.shape[:2]
    gh, gw, _ = guide.shape
    up = ad.interp2d(feats, resize_matrix(h, gh), resize_matrix(w, gw))
    weights = _kernel_weights_graph(guide, kern, radius)
    return ad.mixk(weights, ad.neighborhood(up, radius))


def _downsample_graph(
    feats: Tensor, image_hw: tuple[int, int], dp: _Down, patch: int
) -> Tensor:
    h, w, c = feats.data.shape
    ih, iw = image_hw
    if ih % patch or iw % patch:
        raise ValueError(f"image dims {iw}x{ih} are not multiples of patch {patch}")
    up = ad.interp2d(feats, resize_matrix(h, ih), resize_matrix(w, iw))
    y = ad.add(ad.mul(up, dp.gamma), dp.beta)
    logits = ad.add(ad.tsum(ad.mul(y, dp.sal_w), axis=-1), dp.sal_b)
    nh, nw = ih // patch, iw // patch
    yw = ad.reshape(
        ad.transpose(ad.reshape(y, (nh, patch, nw, patch, c)), (0, 2, 1, 3, 4)),
        (nh, nw, patch * patch, c),
    )
    lw = ad.reshape(
        ad.transpose(ad.reshape(logits, (nh, patch, nw, patch)), (0, 2, 1, 3)),
        (nh, nw, patch * patch),
    )
    att = ad.softmax(lw, axis=-1)
    return ad.mixk(att, yw)


def _pyramid_loss_graph(
    f0: np.ndarray,
    guides: Sequence[np.ndarray],
    image_hw: tuple[int, int],
    kernels: Sequence[_Kernel],
    downs: Sequence[_Down],
    radius: int,
    patch: int,
) -> Tensor:
    base = Tensor(f0)
    cur = base
    total = None
    for kern, dp, guide in zip(kernels, downs, guides):
        cur = _guided_upsample_graph(cur, guide, kern, radius)
        rec = _downsample_graph(cur, image_hw, dp, patch)
        diff = ad.sub(rec, base)
        term = ad.mean(ad.mul(diff, diff))
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 0.5)


def jbu_upsample(
    f_level: FeatureMap, guide: Image, params: VdimParams, level: int | None = None
) -> FeatureMap:
    """Double a feature map's resolution under guidance-image control.

    ``guide`` must have exactly twice the feature map's dims (it is the
    pyramid image at the target resolution).
    """
    lvl = f_level.level if level is None else level
    if lvl < 0 or lvl >= len(params.levels):
        raise ValueError(f"no upsampling kernel for source level {lvl}")
    if (guide.height, guide.width) != (2 * f_level.height, 2 * f_level.width):
        raise ValueError(
            f"guide dims {guide.width}x{guide.height} do not match 2x feature dims "
            f"{2 * f_level.width}x{2 * f_level.height}"
        )
    kern = _wrap_kernel(params.levels[lvl])
    out = _guided_upsample_graph(
        Tensor(f_level.data.astype(np.float64)),
        guide.pixels.astype(np.float64),
        kern,
        params.radius,
    )
    return FeatureMap(out.data.astype(np.float32), level=lvl + 1, origin=f_level.origin)


def _wrap_kernel(lk: LevelKernel) -> _Kernel:
    return _Kernel(
        Tensor(lk.proj_w), Tensor(lk.proj_b), Tensor(lk.log_sigma_dist), Tensor(lk.log_sigma_sim)
    )


def _wrap_down(ld: LevelDown) -> _Down:
    return _Down(Tensor(ld.gamma), Tensor(ld.beta), Tensor(ld.sal_w), Tensor(ld.sal_b))


def jbu_kernel_weights(guide: Image, params: VdimParams, level: int) -> np.ndarray:
    """The (gh, gw, K) renormalized neighbor weights for one level; rows sum to 1."""
    kern = _wrap_kernel(params.levels[level])
    return _kernel_weights_graph(guide.pixels.astype(np.float64), kern, params.radius).data


def attention_downsample(
    f_high: FeatureMap, image_dims: tuple[int, int], params: DownsamplerParams
) -> FeatureMap:
    """Reduce a high-level map back to base dims via saliency-weighted windows.

    ``image_dims`` is (height, width) of the original image; output dims are
    ``image_dims / patch``.
    """
    if f_high.level < 1 or f_high.level - 1 >= len(params.levels):
        raise ValueError(f"no downsampler for level {f_high.level}")
    dp = _wrap_down(params.levels[f_high.level - 1])
    out = _downsample_graph(
        Tensor(f_high.data.astype(np.float64)), tuple(image_dims), dp, params.patch
    )
    return FeatureMap(out.data.astype(np.float32), level=0, origin=f_high.origin)


def mlr_loss(
    isp: FeaturePyramid, down: DownsamplerParams, image_dims: tuple[int, int]
) -> float:
    """Reconstruction loss of a built pyramid: half the sum over upper levels
    of the per-element mean squared difference to the base map."""
    if len(isp.levels) < 2:
        raise ValueError("mlr_loss needs the full pyramid")
    base = Tensor(isp.levels[0].data.astype(np.float64))
    total = None
    for fmap in isp.levels[1:]:
        dp = _wrap_down(down.levels[fmap.level - 1])
        rec = _downsample_graph(
            Tensor(fmap.data.astype(np.float64)), tuple(image_dims), dp, down.patch
        )
        diff = ad.sub(rec, base)
        term = ad.mean(ad.mul(diff, diff))
        total = term if total is None else ad.add(total, term)
    return 0.5 * total.item()


def build_isp(
    f0: FeatureMap, pyramid: ImagePyramid, params: VdimParams
) -> FeaturePyramid:
    """Grow the full feature pyramid from the base map and its guidance images."""
    need = len(params.levels) + 1
    if len(pyramid.levels) < need:
        raise ValueError(f"image pyramid has {len(pyramid.levels)} levels, need {need}")
    base_img = pyramid.levels[0]
    if (base_img.height, base_img.width) != (f0.height, f0.width):
        raise ValueError("pyramid level 0 dims must equal the base feature dims")
    levels = [FeatureMap(f0.data, level=0, origin=f0.origin)]
    for lvl in range(len(params.levels)):
        levels.append(jbu_upsample(levels[-1], pyramid.levels[lvl + 1], params, level=lvl))
    return FeaturePyramid(levels=levels, origin=f0.origin)


def mlr_objective(
    f0: FeatureMap,
    pyramid: ImagePyramid,
    vdim: VdimParams,
    down: DownsamplerParams,
) -> tuple[list[Tensor], "callable"]:
    """Parameters and callable for gradient-checking the training loss.

    The callable rebuilds the whole loss graph (pyramid construction included)
    from the returned parameter tensors on every invocation.
    """
    kernels, downs, flat = _wrap_params(vdim, down, trainable=True)
    guides = [lvl.pixels.astype(np.float64) for lvl in pyramid.levels[1 : len(vdim.levels) + 1]]
    base_img = pyramid.levels[0]
    image_hw = (base_img.height * down.patch, base_img.width * down.patch)
    f0_data = f0.data.astype(np.float64)

    def objective(_params):
        return _pyramid_loss_graph(
            f0_data, guides, image_hw, kernels, downs, vdim.radius, down.patch
        )

    return flat, objective


@dataclass
class TrainResult:
    vdim: VdimParams
    down: DownsamplerParams
    losses: list[float]


def pretrain_vdim(
    corpus: Sequence[Image],
    encoder_spec: EncoderSpec,
    vdim: VdimParams,
    down: DownsamplerParams,
    steps: int,
    lr: float = 1e-3,
    batch: int = 4,
) -> TrainResult:
    """Jointly fit the upsampling kernels and downsamplers on a frozen encoder.

    Batches cycle through the corpus in order, so the run is a pure function
    of its inputs.  ``losses[k]`` is the batch loss observed at step k+1
    before its update; with ``steps == 0`` the single entry is the initial
    loss.  Parameters are updated in place and also returned.
    """
    if not corpus:
        raise ValueError("pretrain_vdim requires a non-empty corpus")
    if encoder_spec.channels != down.channels:
        raise ValueError(
            f"encoder channels {encoder_spec.channels} != downsampler channels {down.channels}"
        )
    prepared = []
    for i, img in enumerate(corpus):
        fmap = encode(img, encoder_spec, origin=f"corpus:{i}")
        pyr = build_image_pyramid(img, patch=encoder_spec.patch, levels=len(vdim.levels) + 1)
        prepared.append(
            (
                fmap.data.astype(np.float64),
                [lvl.pixels.astype(np.float64) for lvl in pyr.levels[1:]],
                (img.height, img.width),
            )
        )

    def batch_items(step_index: int):
        start = step_index * batch
        return [prepared[(start + k) % len(prepared)] for k in range(batch)]

    arrays = [a for _, a in trainable_arrays(vdim, down)]
    state = AdamState.for_params(arrays, lr=lr)
    losses: list[float] = []

    if steps == 0:
        total = 0.0
        for f0, guides, hw in batch_items(0):
            kernels, downs_t, _ = _wrap_params(vdim, down, trainable=False)
            loss = _pyramid_loss_graph(f0, guides, hw, kernels, downs_t, vdim.radius, down.patch)
            total += loss.item()
        return TrainResult(vdim=vdim, down=down, losses=[total / batch])

    for step in range(1, steps + 1):
        grad_sum = [np.zeros_like(a) for a in arrays]
        loss_sum = 0.0
        for f0, guides, hw in batch_items(step - 1):
            kernels, downs_t, flat = _wrap_params(vdim, down, trainable=True)
            loss = _pyramid_loss_graph(f0, guides, hw, kernels, downs_t, vdim.radius, down.patch)
            if not np.isfinite(loss.data):
                raise NumericalError(f"non-finite training loss at step {step}")
            ad.backward(loss)
            loss_sum += loss.item()
            for acc, t in zip(grad_sum, flat):
                if t.grad is not None:
                    acc += t.grad
        grads = [g / batch for g in grad_sum]
        for target, updated in zip(arrays, adam_step(arrays, grads, state)):
            target[...] = updated
        losses.append(loss_sum / batch)

    return TrainResult(vdim=vdim, down=down, losses=losses)
