"""Adaptive partitioning of arbitrary-resolution images into at most six
slices plus a fixed-size overview image.

The slice count targets one slice per 336x336 tile of input area; among the
grid factorizations of that count (give or take one), the grid whose slices
are closest to square wins, scored by the absolute log aspect ratio.  Crops
use integer pixel boundaries that tile the input exactly; each crop is then
resized so both sides are multiples of 14 (the encoder patch), capped at 336.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image_io import Image, resize_image

__all__ = ["SliceLayout", "compute_slice_layout", "extract_slices"]

OVERVIEW_SIDE = 336
PATCH = 14
MIN_SLICE_SIDE = 56


@dataclass
class SliceLayout:
    """Grid partition of an image: ``rects[i * cols + j]`` is row i, col j.

    Rectangles are (x0, y0, x1, y1) in original-image pixels and tile the
    image exactly; ``slice_dims`` are the post-resize (w, h) of every slice,
    all multiples of 14.
    """

    rows: int
    cols: int
    rects: list[tuple[int, int, int, int]]
    slice_dims: list[tuple[int, int]]
    overview_dims: tuple[int, int] = (OVERVIEW_SIDE, OVERVIEW_SIDE)

    @property
    def count(self) -> int:
        return self.rows * self.cols


def _snap_side(side: int) -> int:
    cells = int(np.clip(round(side / PATCH), MIN_SLICE_SIDE // PATCH, OVERVIEW_SIDE // PATCH))
    return cells * PATCH


def compute_slice_layout(width: int, height: int, max_slices: int = 6) -> SliceLayout:
    """Choose the slice grid for an image of the given pixel dims.

    The candidate slice counts are the area-ideal count and its neighbors;
    each count contributes every cols x rows factorization.  Grids are ranked
    by ``-|log(width * rows / (height * cols))|`` (squarest slices first),
    with ties broken by fewer slices, then fewer columns.
    """
    if width < MIN_SLICE_SIDE or height < MIN_SLICE_SIDE:
        raise ValueError(f"image dims {width}x{height} below minimum {MIN_SLICE_SIDE}")
    ideal = min(max(math.ceil(width * height / OVERVIEW_SIDE**2), 1), max_slices)
    counts = sorted({n for n in (ideal - 1, ideal, ideal + 1) if 1 <= n <= max_slices})
    best = None
    for n in counts:
        for cols in range(1, n + 1):
            if n % cols:
                continue
            rows = n // cols
            score = -abs(math.log(width * rows / (height * cols)))
            key = (-score, n, cols)
            if best is None or key < best[0]:
                best = (key, cols, rows)
    _, cols, rows = best
    xs = [i * width // cols for i in range(cols + 1)]
    ys = [i * height // rows for i in range(rows + 1)]
    rects = []
    dims = []
    for i in range(rows):
        for j in range(cols):
            rect = (xs[j], ys[i], xs[j + 1], ys[i + 1])
            rects.append(rect)
            dims.append((_snap_side(rect[2] - rect[0]), _snap_side(rect[3] - rect[1])))
    return SliceLayout(rows=rows, cols=cols, rects=rects, slice_dims=dims)


def extract_slices(image: Image, layout: SliceLayout) -> tuple[list[Image], Image]:
    """Crop and resize every slice; also produce the 336x336 overview."""
    if layout.rects[-1][2] != image.width or layout.rects[-1][3] != image.height:
        raise ValueError("layout was computed for different image dims")
    slices = []
    for rect, (w, h) in zip(layout.rects, layout.slice_dims):
        x0, y0, x1, y1 = rect
        crop = Image(image.pixels[y0:y1, x0:x1])
        slices.append(resize_image(crop, w, h))
    overview = resize_image(image, *layout.overview_dims)
    return slices, overview
