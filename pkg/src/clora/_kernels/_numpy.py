"""Pure-numpy reference kernels.

Signatures match ``_numba`` one-for-one; each function is the fallback when
numba is disabled or unavailable.
"""

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)


def layernorm_forward(x, gamma, beta, eps):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0]


def layernorm_backward(gy, xhat, rstd, gamma):
    ggamma = (gy * xhat).sum(axis=0)
    gbeta = gy.sum(axis=0)
    g = gy * gamma
    d = xhat.shape[1]
    gx = (g - g.mean(axis=1, keepdims=True) - xhat * (g * xhat).sum(axis=1, keepdims=True) / d)
    return gx * rstd[:, None], ggamma, gbeta


def softmax_forward(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y, gy):
    return y * (gy - (gy * y).sum(axis=1, keepdims=True))


def gelu_forward(x):
    """tanh-approximated GELU; also returns the tanh term for the backward pass."""
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(x, t, gy):
    du = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def upsample_nearest_backward(g, factor):
    b, c, h, w = g.shape
    return g.reshape(b, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def confusion_accumulate(counts, gt, pred, ignore):
    """Add ``(gt, pred)`` pairs into ``counts`` in place.

    Returns -1 on success, otherwise the first offending label id (nothing is
    added in that case).
    """
    n = counts.shape[0]
    keep = gt != ignore
    g = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    bad = np.concatenate([g[(g < 0) | (g >= n)], p[(p < 0) | (p >= n)]])
    if bad.size:
        return int(bad[0])
    counts += np.bincount(g * n + p, minlength=n * n).reshape(n, n)
    return -1


def rasterize(kind, cx, cy, size, angle, height, width):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    r = size / 2.0
    if kind == 0:
        return u * u + v * v <= r * r
    if kind == 1:
        return (np.abs(u) <= r) & (np.abs(v) <= r)
    if kind == 2:
        # isosceles triangle, apex up in the rotated frame
        return (v <= r) & (v >= -r) & (np.abs(u) <= (v + r) * 0.5)
    if kind == 3:
        d2 = u * u + v * v
        return (d2 <= r * r) & (d2 >= (0.5 * r) ** 2)
    if kind == 4:
        w3 = r / 3.0
        return ((np.abs(u) <= r) & (np.abs(v) <= w3)) | ((np.abs(v) <= r) & (np.abs(u) <= w3))
    if kind == 5:
        return np.abs(u) + np.abs(v) <= r
    raise ValueError(f"unknown shape kind {kind}")


def pareto_mask(cost, score):
    """Non-dominated mask for (minimise ``cost``, maximise ``score``)."""
    n = cost.shape[0]
    order = np.lexsort((-score, cost))
    c = cost[order]
    s = score[order]
    start = np.searchsorted(c, c, side="left")
    running = np.maximum.accumulate(s)
    before = np.where(start > 0, running[np.maximum(start - 1, 0)], -np.inf)
    keep_sorted = (s == s[start]) & (s > before)
    keep = np.zeros(n, dtype=np.bool_)
    keep[order] = keep_sorted
    return keep
