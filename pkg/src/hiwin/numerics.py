"""Dense-array numerics: resampling, stable softmax, optimizer, gradient
checks, and the PCA feature renderer.

Everything here works on plain ndarrays; interop with the differentiation
graph happens through :func:`grad_check` and the shared
:func:`resize_matrix` sampling convention (align-corners=false, clamp to
edge), which is the single source of truth for every bilinear lookup in the
package.  Accumulation is done in float64; results are cast back to the
caller's dtype.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import NumericalError, Tensor

__all__ = [
    "AdamState",
    "adam_step",
    "bilinear_resize",
    "grad_check",
    "pca_rgb",
    "power_iteration_components",
    "resize_matrix",
    "softmax",
]


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """1-D bilinear interpolation matrix of shape (n_out, n_in).

    Output sample i reads the source at ``(i + 0.5) * n_in / n_out - 0.5``
    clamped to ``[0, n_in - 1]`` (align-corners=false), so constant inputs
    are preserved exactly and ``n_out == n_in`` yields the identity.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("resize_matrix requires positive sizes")
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample an (H, W, C) or (H, W) array to (out_h, out_w).

    Identical input and output dims return an exact copy.
    """
    src = np.asarray(src)
    if src.ndim == 2:
        return bilinear_resize(src[:, :, None], out_h, out_w)[:, :, 0]
    if src.ndim != 3:
        raise ValueError("bilinear_resize expects an (H, W, C) array")
    h, w, _ = src.shape
    if src.size == 0 or h < 1 or w < 1:
        raise ValueError("bilinear_resize: zero-size input")
    if out_h < 1 or out_w < 1:
        raise ValueError("bilinear_resize: output dims must be positive")
    if (out_h, out_w) == (h, w):
        return src.copy()
    rm = resize_matrix(h, out_h)
    cm = resize_matrix(w, out_w)
    tmp = np.tensordot(rm, src.astype(np.float64), axes=(1, 0))
    out = np.tensordot(cm, tmp, axes=(1, 1)).transpose(1, 0, 2)
    return np.ascontiguousarray(out).astype(src.dtype)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax (max subtraction); slices along ``axis`` sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    ``f`` is re-evaluated with each parameter entry nudged by ±h, so it must
    be a pure function of the params' current values.  The relative error for
    one entry is ``|analytic - fd| / max(|analytic|, |fd|, 1e-12)``.
    """
    if h <= 0:
        raise ValueError("grad_check requires h > 0")
    out = f(params)
    if not np.isfinite(out.data):
        raise NumericalError("grad_check: objective is not finite")
    for p in params:
        p.grad = None
    out.backward()

    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_hi = float(f(params).data)
            flat[i] = keep - h
            f_lo = float(f(params).data)
            flat[i] = keep
            if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
                raise NumericalError("grad_check: perturbed objective is not finite")
            fd = (f_hi - f_lo) / (2.0 * h)
            denom = max(abs(analytic[i]), abs(fd), 1e-12)
            worst = max(worst, abs(analytic[i] - fd) / denom)
    return worst


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls,
        params: Sequence[np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter values.

    ``state`` is advanced in place.  A zero gradient leaves the returned
    parameters equal to the inputs.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: parameter/gradient/state length mismatch")
    state.step += 1
    t = state.step
    correct1 = 1.0 - state.beta1**t
    correct2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ValueError(f"adam_step: shape mismatch at parameter {i}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / correct1
        v_hat = state.v[i] / correct2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


def power_iteration_components(
    cov: np.ndarray, k: int, iters: int = 500, tol: float = 1e-7
) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of a symmetric PSD matrix by deflated power iteration.

    Returns ``(values, vectors)`` with vectors in columns; components whose
    eigenvalue is negligible relative to the trace come back as zero vectors.
    """
    cov = np.asarray(cov, dtype=np.float64)
    dim = cov.shape[0]
    rng = np.random.default_rng(0)
    floor = 1e-12 * max(float(np.trace(cov)), 1.0)
    values = np.zeros(k)
    vectors = np.zeros((dim, k))
    work = cov.copy()
    for c in range(k):
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        for _ in range(max(iters, 50)):
            w = work @ v
            norm = np.linalg.norm(w)
            if norm <= 1e-30:
                break
            w /= norm
            if np.linalg.norm(w - v) < tol:
                v = w
                break
            v = w
        lam = float(v @ work @ v)
        if lam <= floor:
            break
        values[c] = lam
        vectors[:, c] = v
        work = work - lam * np.outer(v, v)
    return values, vectors


def pca_rgb(features: np.ndarray) -> np.ndarray:
    """Project an (H, W, C) map onto its top-3 principal components as RGB.

    Channels are min-max scaled to [0, 1].  A map with no variance renders
    mid-gray; components beyond the input's rank render black.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 3:
        raise ValueError("pca_rgb expects an (H, W, C) array")
    h, w, c = feats.shape
    if h * w < 3:
        raise ValueError("pca_rgb requires at least 3 spatial positions")
    x = feats.reshape(-1, c)
    x = x - x.mean(axis=0)
    if float((x * x).sum()) <= 1e-24:
        return np.full((h, w, 3), 0.5, dtype=np.float32)
    cov = (x.T @ x) / max(x.shape[0] - 1, 1)
    _, vectors = power_iteration_components(cov, 3)
    proj = x @ vectors  # (n, 3)
    out = np.zeros_like(proj)
    for ch in range(3):
        lo = proj[:, ch].min()
        span = proj[:, ch].max() - lo
        if span > 1e-12:
            out[:, ch] = (proj[:, ch] - lo) / span
    return out.reshape(h, w, 3).astype(np.float32)
