"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and, for derived values, records a
closure mapping the output gradient back onto the operands (define-by-run).
``backward()`` walks the recorded graph once in reverse topological order and
accumulates gradients into every leaf created with ``requires_grad=True``.

Only the operations the training path needs are provided.  All of them are
vectorized and rely on numpy's fixed reduction order, so repeated runs on the
same inputs produce bit-identical values and gradients.  Data is promoted to
float64 on entry; loss evaluation and finite-difference checks need 64-bit
accumulation to reach their tolerances.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NumericalError",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "div",
    "dotk",
    "exp",
    "interp2d",
    "log",
    "matmul",
    "mean",
    "mixk",
    "mul",
    "neighborhood",
    "power",
    "reshape",
    "softmax",
    "sub",
    "tanh",
    "transpose",
    "tsum",
]


class NumericalError(ArithmeticError):
    """A computation that must stay finite produced NaN or inf."""


class Tensor:
    """float64 array node in the differentiation graph.

    Leaves are created directly (``Tensor(data, requires_grad=True)`` for
    trainable parameters); everything else comes out of the op functions
    below.  A graph is single-owner: build it, call :meth:`backward` once,
    read ``.grad`` off the leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _node(a.data / b.data, (a, b), vjp)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _node(a.data**p, (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _node(out_data, (a,), vjp)


def log(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out_data * out_data),)

    return _node(out_data, (a,), vjp)


def matmul(a, b) -> Tensor:
    """2-D matrix product with gradients for both operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), vjp)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _node(data, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[i] for i in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), vjp)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return ((g - inner) * y,)

    return _node(y, (a,), vjp)


def interp2d(a, row_mat: np.ndarray, col_mat: np.ndarray) -> Tensor:
    """Separable linear resampling of an (H, W, C) map.

    ``out[i, j, c] = sum_pq row_mat[i, p] * col_mat[j, q] * a[p, q, c]``.
    The matrices are constants; the gradient flows only through ``a``.
    """
    a = as_tensor(a)
    rm = np.asarray(row_mat, dtype=np.float64)
    cm = np.asarray(col_mat, dtype=np.float64)
    tmp = np.tensordot(rm, a.data, axes=(1, 0))  # (oh, W, C)
    out = np.ascontiguousarray(np.tensordot(cm, tmp, axes=(1, 1)).transpose(1, 0, 2))

    def vjp(g):
        t1 = np.tensordot(rm.T, g, axes=(1, 0))  # (H, ow, C)
        ga = np.tensordot(cm.T, t1, axes=(1, 1)).transpose(1, 0, 2)
        return (np.ascontiguousarray(ga),)

    return _node(out, (a,), vjp)


def neighborhood(a, radius: int) -> Tensor:
    """Stack the (2r+1)^2 edge-clamped spatial neighbors of every cell.

    (H, W, D) -> (H, W, K, D); neighbor k corresponds to the row-major
    offset (dy, dx) with dy, dx in [-radius, radius].  The adjoint folds the
    edge padding back onto the border cells, which keeps the backward pass a
    handful of dense slice additions instead of a scatter.
    """
    a = as_tensor(a)
    if a.data.ndim != 3:
        raise ValueError("neighborhood expects an (H, W, D) array")
    h, w, _ = a.data.shape
    r = int(radius)
    k = 2 * r + 1
    offsets = [(dy, dx) for dy in range(k) for dx in range(k)]
    pad = np.pad(a.data, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.empty((h, w, k * k, a.data.shape[2]), dtype=np.float64)
    for idx, (dy, dx) in enumerate(offsets):
        out[:, :, idx, :] = pad[dy : dy + h, dx : dx + w]

    def vjp(g):
        gp = np.zeros_like(pad)
        for idx, (dy, dx) in enumerate(offsets):
            gp[dy : dy + h, dx : dx + w] += g[:, :, idx, :]
        core = gp[r : r + h, r : r + w].copy()
        if r > 0:
            core[0] += gp[:r, r : r + w].sum(axis=0)
            core[-1] += gp[r + h :, r : r + w].sum(axis=0)
            core[:, 0] += gp[r : r + h, :r].sum(axis=1)
            core[:, -1] += gp[r : r + h, r + w :].sum(axis=1)
            core[0, 0] += gp[:r, :r].sum(axis=(0, 1))
            core[0, -1] += gp[:r, r + w :].sum(axis=(0, 1))
            core[-1, 0] += gp[r + h :, :r].sum(axis=(0, 1))
            core[-1, -1] += gp[r + h :, r + w :].sum(axis=(0, 1))
        return (core,)

    return _node(out, (a,), vjp)


def dotk(a, b) -> Tensor:
    """Per-site dot products: (..., D) x (..., K, D) -> (..., K)."""
    a, b = as_tensor(a), as_tensor(b)
    out = np.einsum("...d,...kd->...k", a.data, b.data)

    def vjp(g):
        ga = np.einsum("...k,...kd->...d", g, b.data)
        gb = np.einsum("...k,...d->...kd", g, a.data)
        return ga, gb

    return _node(out, (a, b), vjp)


def mixk(w, v) -> Tensor:
    """Per-site weighted sums: (..., K) x (..., K, C) -> (..., C)."""
    w, v = as_tensor(w), as_tensor(v)
    out = np.einsum("...k,...kc->...c", w.data, v.data)

    def vjp(g):
        gw = np.einsum("...c,...kc->...k", g, v.data)
        gv = np.einsum("...k,...c->...kc", w.data, g)
        return gw, gv

    return _node(out, (w, v), vjp)


def backward(out: Tensor) -> None:
    """Accumulate d(out)/d(leaf) into ``.grad`` of every trainable leaf."""
    if out.data.shape != ():
        raise ValueError("backward() requires a scalar output")
    if not np.isfinite(out.data):
        raise NumericalError("backward() called on a non-finite value")
    if not out.requires_grad:
        return

    order: list[Tensor] = []
    visited = {id(out)}
    stack: list[tuple[Tensor, object]] = [(out, iter(out._parents))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            if parent.requires_grad and id(parent) not in visited:
                visited.add(id(parent))
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()

    grads: dict[int, np.ndarray] = {id(out): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
