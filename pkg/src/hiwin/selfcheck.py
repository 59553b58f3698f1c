"""Built-in consistency checks backing the ``selftest`` CLI command.

Each check pits a vectorized library path against a small, independently
written scalar reference, or against finite differences.  They are cheap
enough to run on every install.
"""

from __future__ import annotations

import math

import numpy as np

from .encoder import FeatureMap
from .image_io import synth_corpus
from .numerics import grad_check
from .vdim import DownsamplerParams, VdimParams, mlr_objective
from .window_attn import DEFAULT_PROPOSALS, roi_align, select_grid
from . import image_io

__all__ = ["check_grid_selection", "check_gradients", "check_roi_align", "run_all"]


def _scalar_grid_choice(width: float, height: float) -> tuple[int, int]:
    # plain-math argmax over the proposals, first maximum wins
    best, best_score = None, None
    for rw, rh in DEFAULT_PROPOSALS:
        score = -abs(math.log(width / height) - math.log(rw / rh))
        if best_score is None or score > best_score:
            best, best_score = (rw, rh), score
    return best


def check_grid_selection(trials: int = 1000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        w = int(rng.integers(8, 513))
        h = int(rng.integers(8, 513))
        if select_grid(w, h) != _scalar_grid_choice(w, h):
            return False, f"grid mismatch at {w}x{h}"
    return True, f"{trials} random map dims match the reference argmax"


def _scalar_bilinear(data: np.ndarray, x: float, y: float) -> np.ndarray:
    h, w, _ = data.shape
    xf = min(max(x - 0.5, 0.0), w - 1.0)
    yf = min(max(y - 0.5, 0.0), h - 1.0)
    x0, y0 = int(math.floor(xf)), int(math.floor(yf))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = xf - x0, yf - y0
    top = (1 - fx) * data[y0, x0].astype(np.float64) + fx * data[y0, x1]
    bot = (1 - fx) * data[y1, x0].astype(np.float64) + fx * data[y1, x1]
    return (1 - fy) * top + fy * bot


def _scalar_roi(data: np.ndarray, box, grid) -> np.ndarray:
    h, w, c = data.shape
    x0 = min(max(box[0], 0.0), float(w))
    y0 = min(max(box[1], 0.0), float(h))
    x1 = min(max(box[2], 0.0), float(w))
    y1 = min(max(box[3], 0.0), float(h))
    rw, rh = grid
    out = np.zeros((rh, rw, c))
    for u in range(rh):
        for v in range(rw):
            cx = x0 + (v + 0.5) * (x1 - x0) / rw
            cy = y0 + (u + 0.5) * (y1 - y0) / rh
            cx = min(max(cx, x0 + 0.5), x1 - 0.5) if x1 - x0 >= 1 else (x0 + x1) / 2
            cy = min(max(cy, y0 + 0.5), y1 - 0.5) if y1 - y0 >= 1 else (y0 + y1) / 2
            out[u, v] = _scalar_bilinear(data, cx, cy)
    return out


def check_roi_align(trials: int = 50, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        h = int(rng.integers(2, 33))
        w = int(rng.integers(2, 33))
        data = rng.standard_normal((h, w, 4)).astype(np.float32)
        xs = np.sort(rng.uniform(0, w, 2))
        ys = np.sort(rng.uniform(0, h, 2))
        if xs[1] - xs[0] < 1e-3 or ys[1] - ys[0] < 1e-3:
            continue
        box = (xs[0], ys[0], xs[1], ys[1])
        grid = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        got = roi_align(data, box, grid)
        want = _scalar_roi(data, box, grid)
        worst = max(worst, float(np.abs(got - want).max()))
    ok = worst <= 1e-6
    return ok, f"max deviation {worst:.2e} from the scalar reference"


def check_gradients(seed: int = 0) -> tuple[bool, str]:
    image = synth_corpus(seed, 1, 56)[0]
    pyramid = image_io.build_image_pyramid(image)
    channels, d_proj = 5, 6
    rng = np.random.default_rng(seed)
    f0 = FeatureMap(rng.standard_normal((4, 4, channels)).astype(np.float32))
    vdim = VdimParams.init(d_proj=d_proj, seed=seed)
    down = DownsamplerParams.init(channels, seed=seed)
    params, objective = mlr_objective(f0, pyramid, vdim, down)
    err = grad_check(objective, params, h=1e-4)
    return err < 1e-4, f"max relative gradient error {err:.2e}"


def run_all(seed: int = 0) -> list[tuple[str, bool, str]]:
    return [
        ("grid-selection", *check_grid_selection(seed=seed)),
        ("roi-align", *check_roi_align(seed=seed)),
        ("gradients", *check_gradients(seed=seed)),
    ]
