"""Hierarchical window attention: grid-size selection, window generation,
RoI sampling, cross-scale key/value assembly, and the per-window
cross-attention that compresses a feature pyramid into an N x N token map.

Every level of the pyramid is tiled into N x N float-coordinate windows; the
windows sharing a 2D index cover the same normalized image region at every
level.  One pooling grid (r_w, r_h) per map is chosen from five proposals by
maximizing ``-|log(W/H) - log(r_w/r_h)|``, i.e. the grid whose aspect best
matches the map.  Each learnable query attends only to the RoI samples of
its own window set, concatenated across levels, so a token depends on
exactly its window's content.

RoI sampling convention (shared with the test oracles): boxes are clamped to
map bounds and split into r_h x r_w bins; one bilinear sample is taken per
bin at the bin center, with the sample coordinate clamped half a cell inside
the box so the interpolation support never crosses the window boundary
(boxes narrower than one cell sample at their midpoint).  Coordinates are
continuous with half-pixel centers: cell (p, q) is centered at
(q + 0.5, p + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import FeatureMap
from .numerics import softmax
from .vdim import FeaturePyramid

__all__ = [
    "AttnParams",
    "DEFAULT_PROPOSALS",
    "HiwinConfig",
    "TokenMap",
    "WindowSet",
    "assemble_kv",
    "compress",
    "cross_attention",
    "generate_windows",
    "position_embedding_2d",
    "roi_align",
    "select_grid",
]

DEFAULT_PROPOSALS: tuple[tuple[int, int], ...] = ((3, 3), (2, 3), (3, 2), (2, 4), (4, 2))


@dataclass(frozen=True)
class HiwinConfig:
    """Projector configuration: query grid side N, pooling-grid proposals,
    attention heads, and feature channels."""

    grid_side: int = 12
    proposals: tuple[tuple[int, int], ...] = DEFAULT_PROPOSALS
    heads: int = 4
    channels: int = 64


@dataclass
class WindowSet:
    """Per-level (n, n, 4) boxes (x0, y0, x1, y1) in level cell coordinates."""

    boxes: list[np.ndarray]

    @property
    def grid_side(self) -> int:
        return self.boxes[0].shape[0]


@dataclass
class TokenMap:
    """The N x N x C compressed query grid for one slice or overview."""

    data: np.ndarray
    origin: str = "overview"

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or d.shape[0] != d.shape[1]:
            raise ValueError("TokenMap requires an (N, N, C) array")
        self.data = d

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class AttnParams:
    """Learnable queries, level embeddings (keys only), and the per-head
    query/key/value/output projections."""

    queries: np.ndarray  # (N, N, C)
    level_emb: np.ndarray  # (L, C)
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray

    @classmethod
    def init(cls, config: HiwinConfig, seed: int = 0, levels: int = 3) -> "AttnParams":
        n, c = config.grid_side, config.channels
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(c)
        weight = lambda: rng.uniform(-scale, scale, (c, c))
        return cls(
            queries=rng.uniform(-0.5, 0.5, (n, n, c)),
            level_emb=rng.uniform(-0.1, 0.1, (levels, c)),
            wq=weight(),
            bq=np.zeros(c),
            wk=weight(),
            bk=np.zeros(c),
            wv=weight(),
            bv=np.zeros(c),
            wo=weight(),
            bo=np.zeros(c),
        )


def select_grid(
    width: float, height: float, proposals: Sequence[tuple[int, int]] = DEFAULT_PROPOSALS
) -> tuple[int, int]:
    """Pick the pooling grid whose aspect ratio best matches the map.

    Score is ``-|log(width/height) - log(r_w/r_h)|``; ties keep the earliest
    proposal in list order.
    """
    if width <= 0 or height <= 0:
        raise ValueError("select_grid requires positive dims")
    target = np.log(width / height)
    best_score, best = None, None
    for rw, rh in proposals:
        score = -abs(target - np.log(rw / rh))
        if best_score is None or score > best_score:
            best_score, best = score, (rw, rh)
    return best


def generate_windows(level_dims: Sequence[tuple[int, int]], n: int) -> WindowSet:
    """Uniform N x N float tiling of every level; box (i, j) at level l is
    ``(j*W/n, i*H/n, (j+1)*W/n, (i+1)*H/n)``."""
    boxes = []
    for h, w in level_dims:
        i = np.arange(n, dtype=np.float64)
        x0 = np.tile(i * w / n, (n, 1))
        y0 = np.tile((i * h / n)[:, None], (1, n))
        boxes.append(np.stack([x0, y0, x0 + w / n, y0 + h / n], axis=-1))
    return WindowSet(boxes=boxes)


def _inset_clamp(coords: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # keep the two-cell bilinear support inside [lo, hi]; sub-cell spans
    # collapse to the midpoint
    if hi - lo >= 1.0:
        return np.clip(coords, lo + 0.5, hi - 0.5)
    return np.full_like(coords, (lo + hi) / 2.0)


def _roi_points(
    box: Sequence[float], grid: tuple[int, int], map_w: int, map_h: int
) -> np.ndarray:
    """Sample coordinates (r_h, r_w, 2) as (x, y) for one box."""
    rw, rh = grid
    x0 = float(np.clip(box[0], 0.0, map_w))
    y0 = float(np.clip(box[1], 0.0, map_h))
    x1 = float(np.clip(box[2], 0.0, map_w))
    y1 = float(np.clip(box[3], 0.0, map_h))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"zero-area box {tuple(box)}")
    cx = x0 + (np.arange(rw, dtype=np.float64) + 0.5) * (x1 - x0) / rw
    cy = y0 + (np.arange(rh, dtype=np.float64) + 0.5) * (y1 - y0) / rh
    cx = _inset_clamp(cx, x0, x1)
    cy = _inset_clamp(cy, y0, y1)
    pts = np.empty((rh, rw, 2), dtype=np.float64)
    pts[:, :, 0] = cx[None, :]
    pts[:, :, 1] = cy[:, None]
    return pts


def _bilinear_sample(data: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear lookups on an (H, W, C) map at (..., 2) (x, y) coordinates."""
    h, w, c = data.shape
    x = np.clip(points[..., 0] - 0.5, 0.0, w - 1.0)
    y = np.clip(points[..., 1] - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    # zero-weight taps collapse onto the inside cell, so they never read
    # (and never depend on) cells outside the sampled region
    x1 = np.where(fx > 0, x0 + 1, x0)
    y1 = np.where(fy > 0, y0 + 1, y0)
    flat = data.reshape(-1, c).astype(np.float64)
    v00 = flat[y0 * w + x0]
    v01 = flat[y0 * w + x1]
    v10 = flat[y1 * w + x0]
    v11 = flat[y1 * w + x1]
    wx = fx[..., None]
    wy = fy[..., None]
    return (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)


def roi_align(
    feature: FeatureMap | np.ndarray, box: Sequence[float], grid: tuple[int, int]
) -> np.ndarray:
    """Pool one box into an (r_h, r_w, C) grid of bilinear samples."""
    data = feature.data if isinstance(feature, FeatureMap) else np.asarray(feature)
    if data.ndim != 3:
        raise ValueError("roi_align expects an (H, W, C) map")
    pts = _roi_points(box, grid, data.shape[1], data.shape[0])
    return _bilinear_sample(data, pts)


def position_embedding_2d(coords: np.ndarray, channels: int, scale: float = 16.0) -> np.ndarray:
    """Fixed sinusoidal embedding of normalized (x, y) coordinates.

    Quarter blocks: sin/cos over x, then sin/cos over y, at geometrically
    spaced frequencies.
    """
    if channels % 4:
        raise ValueError("position embedding needs channels divisible by 4")
    q = channels // 4
    freqs = 1.0 / (10000.0 ** (np.arange(q, dtype=np.float64) / max(q - 1, 1)))
    ax = coords[..., 0:1] * scale * freqs
    ay = coords[..., 1:2] * scale * freqs
    return np.concatenate([np.sin(ax), np.cos(ax), np.sin(ay), np.cos(ay)], axis=-1)


def _nominal_sample_coords(n: int, grid: tuple[int, int]) -> np.ndarray:
    """Normalized [0,1]^2 bin-center positions, (n^2, S, 2).

    These are the unclamped sample locations, identical at every level by
    construction, so the positional embedding of a sample point does not
    depend on which level it was drawn from.
    """
    rw, rh = grid
    ij = np.arange(n, dtype=np.float64)
    bx = (np.arange(rw, dtype=np.float64) + 0.5) / rw
    by = (np.arange(rh, dtype=np.float64) + 0.5) / rh
    x = (ij[None, :, None, None] + bx[None, None, None, :]) / n  # (1, n, 1, rw)
    y = (ij[:, None, None, None] + by[None, None, :, None]) / n  # (n, 1, rh, 1)
    pts = np.empty((n, n, rh, rw, 2), dtype=np.float64)
    pts[..., 0] = x
    pts[..., 1] = y
    return pts.reshape(n * n, rh * rw, 2)


def _assemble_all(
    isp: FeaturePyramid,
    windows: WindowSet,
    grid: tuple[int, int],
    params: AttnParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Keys and values for every window: (n^2, levels*S, C) each.

    Keys carry the level embedding per level block plus the positional
    embedding of each sample point's normalized coordinate; values are the
    raw samples.
    """
    n = windows.grid_side
    rw, rh = grid
    s = rw * rh
    keys, vals = [], []
    for lvl, fmap in enumerate(isp.levels):
        h, w = fmap.height, fmap.width
        boxes = windows.boxes[lvl].reshape(-1, 4)
        pts = np.stack([_roi_points(b, grid, w, h) for b in boxes])  # (n^2, rh, rw, 2)
        samples = _bilinear_sample(fmap.data, pts.reshape(n * n, s, 2))
        keys.append(samples + params.level_emb[lvl])
        vals.append(samples)
    zeta = position_embedding_2d(_nominal_sample_coords(n, grid), isp.channels)
    k = np.concatenate(keys, axis=1) + np.concatenate([zeta] * len(isp.levels), axis=1)
    v = np.concatenate(vals, axis=1)
    return k, v


def assemble_kv(
    isp: FeaturePyramid,
    windows: WindowSet,
    grid: tuple[int, int],
    params: AttnParams,
    index: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Key and value stacks (levels*S, C) for window (i, j)."""
    i, j = index
    k, v = _assemble_all(isp, windows, grid, params)
    flat = i * windows.grid_side + j
    return k[flat], v[flat]


def cross_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    params: AttnParams,
    heads: int,
    return_weights: bool = False,
):
    """Multi-head scaled dot-product attention with output projection.

    ``q`` is (Q, C).  ``k``/``v`` are (Q, L, C) for per-query key sets or
    (L, C) for one key set shared by all queries.
    """
    c = q.shape[-1]
    if c % heads:
        raise ValueError(f"channels {c} not divisible by heads {heads}")
    dk = c // heads
    nq = q.shape[0]
    qh = (q @ params.wq + params.bq).reshape(nq, heads, dk)
    shared = k.ndim == 2
    kh = (k @ params.wk + params.bk).reshape((-1, heads, dk) if shared else (nq, -1, heads, dk))
    vh = (v @ params.wv + params.bv).reshape((-1, heads, dk) if shared else (nq, -1, heads, dk))
    if shared:
        scores = np.einsum("qhd,lhd->qhl", qh, kh) / np.sqrt(dk)
    else:
        scores = np.einsum("qhd,qlhd->qhl", qh, kh) / np.sqrt(dk)
    att = softmax(scores, axis=-1)
    if shared:
        ctx = np.einsum("qhl,lhd->qhd", att, vh)
    else:
        ctx = np.einsum("qhl,qlhd->qhd", att, vh)
    out = ctx.reshape(nq, c) @ params.wo + params.bo
    if return_weights:
        return out, att
    return out


def compress(isp: FeaturePyramid, params: AttnParams, config: HiwinConfig) -> TokenMap:
    """Condense a feature pyramid into the N x N token map.

    One pooling grid is selected from the level-0 dims; each query token
    attends only to the cross-level RoI samples of its own window.
    """
    n = config.grid_side
    base = isp.levels[0]
    grid = select_grid(base.width, base.height, config.proposals)
    windows = generate_windows([(f.height, f.width) for f in isp.levels], n)
    k, v = _assemble_all(isp, windows, grid, params)
    ij = (np.arange(n, dtype=np.float64) + 0.5) / n
    centers = np.stack(np.meshgrid(ij, ij, indexing="xy"), axis=-1).reshape(n * n, 2)
    q = params.queries.reshape(n * n, -1) + position_embedding_2d(centers, base.channels)
    out = cross_attention(q, k, v, params, config.heads)
    return TokenMap(out.reshape(n, n, -1).astype(np.float32), origin=isp.origin)
