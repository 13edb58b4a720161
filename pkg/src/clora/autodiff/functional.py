"""Differentiable operations on ``Tensor``.

Every op validates shapes up front and raises ``ShapeError`` naming both
operands. Backward closures return one gradient per parent, already reduced
to that parent's shape.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as K
from ..errors import NumericError, ShapeError
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _finite(x: np.ndarray, op: str) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"{op}: non-finite input")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b), "add",
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b), "sub",
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), "mul",
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return make_result(out, (a, b), "div",
                       lambda g: (_unbroadcast(g / bd, ad.shape),
                                  _unbroadcast(-g * out / bd, bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), "neg", lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_result(ad**p, (a,), "pow", lambda g: (g * p * ad ** (p - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), "exp", lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_result(np.log(ad), (a,), "log", lambda g: (g / ad,))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2:
        # common linear-layer case: fold leading axes of a into rows
        k = ad.shape[-1]
        a2 = ad.reshape(-1, k)
        out = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def bw(g):
            g2 = g.reshape(-1, bd.shape[1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return make_result(out, (a, b), "matmul", bw)
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), "matmul", bw)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(out), (a,), "sum", bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum(a, axis, keepdims), 1.0 / max(n, 1))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    src = a.shape
    return make_result(out, (a,), "reshape", lambda g: (g.reshape(src),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return make_result(np.ascontiguousarray(a.data.transpose(axes)), (a,), "transpose",
                       lambda g: (g.transpose(inv),))


def _to_2d_last(x: np.ndarray, axis: int):
    moved = np.moveaxis(x, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-1]), moved.shape


def softmax(a, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``; raises ``NumericError`` on inf/nan input."""
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] < 1:
        raise ShapeError(f"softmax: empty axis {axis} in shape {a.shape}")
    _finite(a.data, "softmax")
    x2, mshape = _to_2d_last(a.data, axis)
    y2 = K.softmax_forward(x2)
    out = np.moveaxis(y2.reshape(mshape), -1, axis)

    def bw(g):
        g2, _ = _to_2d_last(g, axis)
        return (np.moveaxis(K.softmax_backward(y2, g2).reshape(mshape), -1, axis),)

    return make_result(out, (a,), "softmax", bw)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _finite(a.data, "logsumexp")
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    w = e / s

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * w,)

    return make_result(out if keepdims else np.squeeze(out, axis=axis), (a,), "logsumexp", bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _finite(a.data, "log_softmax")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return make_result(out, (a,), "log_softmax",
                       lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def gelu(a) -> Tensor:
    """tanh-approximated GELU."""
    a = as_tensor(a)
    x = np.ascontiguousarray(a.data)
    out, t = K.gelu_forward(x)
    return make_result(out, (a,), "gelu", lambda g: (K.gelu_backward(x, t, np.ascontiguousarray(g)),))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: input {x.shape} vs gamma {gamma.shape} / beta {beta.shape}")
    x2 = np.ascontiguousarray(x.data).reshape(-1, d)
    y2, xhat, rstd = K.layernorm_forward(x2, gamma.data, beta.data, eps)
    shape = x.shape
    gd = gamma.data

    def bw(g):
        gx, gg, gb = K.layernorm_backward(np.ascontiguousarray(g).reshape(-1, d), xhat, rstd, gd)
        return gx.reshape(shape), gg, gb

    return make_result(y2.reshape(shape), (x, gamma, beta), "layer_norm", bw)


def take(a, indices, axis: int) -> Tensor:
    """Select ``indices`` along ``axis`` (gradient scatters back, summing repeats)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ShapeError(f"take: indices {idx.tolist()} out of range for axis {axis} of {a.shape}")
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)

    return make_result(np.take(a.data, idx, axis=axis), (a,), "take", bw)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no tensors")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return make_result(out, tuple(ts), "concat", lambda g: tuple(np.split(g, splits, axis=axis)))


def upsample_nearest(a, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of the two trailing axes of ``[B, C, h, w]``."""
    a = as_tensor(a)
    if a.ndim != 4:
        raise ShapeError(f"upsample_nearest: expected [B,C,h,w], got {a.shape}")
    out = np.repeat(np.repeat(a.data, factor, axis=2), factor, axis=3)
    return make_result(out, (a,), "upsample",
                       lambda g: (K.upsample_nearest_backward(np.ascontiguousarray(g), factor),))
