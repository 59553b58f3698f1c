"""Finite-difference checks for every differentiation-graph operation."""

import numpy as np
import pytest

from hiwin import autodiff as ad
from hiwin.autodiff import NumericalError, Tensor


def fd_grads(build, params, h=1e-6):
    """Central-difference gradients of build() w.r.t. every param entry."""
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = build().item()
            flat[i] = keep - h
            lo = build().item()
            flat[i] = keep
            g[i] = (hi - lo) / (2 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def check_op(build, params, tol=1e-6):
    out = build()
    for p in params:
        p.grad = None
    out.backward()
    numeric = fd_grads(build, params)
    for p, fd in zip(params, numeric):
        got = p.grad if p.grad is not None else np.zeros_like(p.data)
        np.testing.assert_allclose(got, fd, rtol=tol, atol=tol)


def leaf(shape, seed, scale=1.0, offset=0.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-1, 1, shape) * scale + offset, requires_grad=True)


def to_scalar(t):
    # weighted reduction keeps every entry's gradient distinct
    rng = np.random.default_rng(99)
    w = Tensor(rng.uniform(0.5, 1.5, t.data.shape))
    return ad.tsum(ad.mul(t, w))


def test_add_sub_mul_div_broadcast():
    a = leaf((2, 3), 1)
    b = leaf((3,), 2, offset=2.5)  # offset keeps the divisor away from zero
    check_op(lambda: to_scalar(ad.add(a, b)), [a, b])
    check_op(lambda: to_scalar(ad.sub(a, b)), [a, b])
    check_op(lambda: to_scalar(ad.mul(a, b)), [a, b])
    check_op(lambda: to_scalar(ad.div(a, b)), [a, b])


def test_scalar_broadcast_against_array():
    a = leaf((4,), 3)
    s = leaf((), 4, offset=1.5)
    check_op(lambda: to_scalar(ad.mul(a, s)), [a, s])
    check_op(lambda: to_scalar(ad.div(a, ad.mul(s, s))), [a, s])


def test_unary_ops():
    a = leaf((3, 2), 5, scale=0.8)
    pos = leaf((3,), 6, offset=2.0)
    check_op(lambda: to_scalar(ad.exp(a)), [a])
    check_op(lambda: to_scalar(ad.tanh(a)), [a])
    check_op(lambda: to_scalar(ad.log(pos)), [pos])
    check_op(lambda: to_scalar(ad.power(pos, 1.7)), [pos])


def test_matmul():
    a = leaf((3, 4), 7)
    b = leaf((4, 2), 8)
    check_op(lambda: to_scalar(ad.matmul(a, b)), [a, b])


def test_sum_and_mean_axes():
    a = leaf((2, 3, 4), 9)
    check_op(lambda: ad.tsum(a), [a])
    check_op(lambda: to_scalar(ad.tsum(a, axis=1)), [a])
    check_op(lambda: to_scalar(ad.tsum(a, axis=2, keepdims=True)), [a])
    check_op(lambda: ad.mean(a), [a])
    check_op(lambda: to_scalar(ad.mean(a, axis=0)), [a])


def test_reshape_transpose():
    a = leaf((2, 3, 4), 10)
    check_op(lambda: to_scalar(ad.reshape(a, (6, 4))), [a])
    check_op(lambda: to_scalar(ad.transpose(a, (2, 0, 1))), [a])


def test_softmax_grad_and_rows():
    a = leaf((3, 5), 11, scale=3.0)
    y = ad.softmax(a, axis=-1)
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
    check_op(lambda: to_scalar(ad.softmax(a, axis=-1)), [a])


def test_interp2d():
    from hiwin.numerics import resize_matrix

    a = leaf((3, 4, 2), 12)
    rm = resize_matrix(3, 5)
    cm = resize_matrix(4, 7)
    check_op(lambda: to_scalar(ad.interp2d(a, rm, cm)), [a])


def test_interp2d_matches_plain_resize():
    from hiwin.numerics import bilinear_resize, resize_matrix

    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 6, 3))
    out = ad.interp2d(Tensor(x), resize_matrix(5, 9), resize_matrix(6, 4)).data
    np.testing.assert_allclose(out, bilinear_resize(x, 9, 4), atol=1e-12)


def test_neighborhood_values_and_grad():
    a = leaf((3, 4, 2), 13)
    out = ad.neighborhood(a, 1)
    assert out.data.shape == (3, 4, 9, 2)
    # spot-check edge clamping: neighbor up-left of (0, 0) is (0, 0) itself
    np.testing.assert_array_equal(out.data[0, 0, 0], a.data[0, 0])
    np.testing.assert_array_equal(out.data[1, 1, 4], a.data[1, 1])  # center offset
    check_op(lambda: to_scalar(ad.neighborhood(a, 1)), [a])
    check_op(lambda: to_scalar(ad.neighborhood(a, 2)), [a])


def test_dotk_mixk():
    a = leaf((2, 3, 4), 14)
    b = leaf((2, 3, 5, 4), 15)
    check_op(lambda: to_scalar(ad.dotk(a, b)), [a, b])
    w = leaf((2, 3, 5), 16)
    v = leaf((2, 3, 5, 4), 17)
    check_op(lambda: to_scalar(ad.mixk(w, v)), [w, v])


def test_leaf_reuse_accumulates():
    a = Tensor(np.array(3.0), requires_grad=True)
    out = ad.add(ad.mul(a, a), a)  # a^2 + a -> grad 2a + 1 = 7
    out.backward()
    assert a.grad == pytest.approx(7.0)


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.tsum(a, axis=0, keepdims=True).backward()  # still 1-D


def test_backward_rejects_nonfinite():
    a = Tensor(np.array(0.0), requires_grad=True)
    with np.errstate(divide="ignore"):
        out = ad.log(a)
    with pytest.raises(NumericalError):
        out.backward()
