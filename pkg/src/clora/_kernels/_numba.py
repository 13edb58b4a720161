"""numba ports of the ``_numpy`` kernels (explicit loops, no fastmath)."""

import math

import numpy as np
from numba import njit

_GELU_C = math.sqrt(2.0 / math.pi)


@njit(cache=True, nogil=True)
def layernorm_forward(x, gamma, beta, eps):
    n, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(n)
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            t = x[i, j] - mu
            var += t * t
        var /= d
        r = 1.0 / math.sqrt(var + eps)
        rstd[i] = r
        for j in range(d):
            h = (x[i, j] - mu) * r
            xhat[i, j] = h
            y[i, j] = h * gamma[j] + beta[j]
    return y, xhat, rstd


@njit(cache=True, nogil=True)
def layernorm_backward(gy, xhat, rstd, gamma):
    n, d = gy.shape
    gx = np.empty_like(gy)
    ggamma = np.zeros(d)
    gbeta = np.zeros(d)
    for i in range(n):
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            g = gy[i, j] * gamma[j]
            s1 += g
            s2 += g * xhat[i, j]
            ggamma[j] += gy[i, j] * xhat[i, j]
            gbeta[j] += gy[i, j]
        s1 /= d
        s2 /= d
        for j in range(d):
            g = gy[i, j] * gamma[j]
            gx[i, j] = (g - s1 - xhat[i, j] * s2) * rstd[i]
    return gx, ggamma, gbeta


@njit(cache=True, nogil=True)
def softmax_forward(x):
    n, c = x.shape
    y = np.empty_like(x)
    for i in range(n):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(c):
            e = math.exp(x[i, j] - m)
            y[i, j] = e
            s += e
        for j in range(c):
            y[i, j] /= s
    return y


@njit(cache=True, nogil=True)
def softmax_backward(y, gy):
    n, c = y.shape
    gx = np.empty_like(y)
    for i in range(n):
        dot = 0.0
        for j in range(c):
            dot += gy[i, j] * y[i, j]
        for j in range(c):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return gx


@njit(cache=True, nogil=True)
def gelu_forward(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    th = np.empty_like(flat)
    for i in range(flat.size):
        v = flat[i]
        t = math.tanh(_GELU_C * (v + 0.044715 * v * v * v))
        th[i] = t
        out[i] = 0.5 * v * (1.0 + t)
    return out.reshape(x.shape), th.reshape(x.shape)


@njit(cache=True, nogil=True)
def gelu_backward(x, th, gy):
    xf = x.ravel()
    tf = th.ravel()
    gf = gy.ravel()
    out = np.empty_like(xf)
    for i in range(xf.size):
        v = xf[i]
        t = tf[i]
        du = _GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
        out[i] = gf[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out.reshape(x.shape)


@njit(cache=True, nogil=True)
def upsample_nearest_backward(g, factor):
    b, c, h, w = g.shape
    out = np.zeros((b, c, h // factor, w // factor))
    for i in range(b):
        for j in range(c):
            for y in range(h):
                for x in range(w):
                    out[i, j, y // factor, x // factor] += g[i, j, y, x]
    return out


@njit(cache=True, nogil=True)
def _confusion_check(n, gt, pred, ignore):
    for i in range(gt.size):
        g = gt[i]
        if g == ignore:
            continue
        if g < 0 or g >= n:
            return np.int64(g)
        if pred[i] < 0 or pred[i] >= n:
            return np.int64(pred[i])
    return np.int64(-1)


@njit(cache=True, nogil=True)
def _confusion_add(counts, gt, pred, ignore):
    for i in range(gt.size):
        if gt[i] != ignore:
            counts[gt[i], pred[i]] += 1


def confusion_accumulate(counts, gt, pred, ignore):
    g = np.ascontiguousarray(gt).ravel().astype(np.int64)
    p = np.ascontiguousarray(pred).ravel().astype(np.int64)
    bad = _confusion_check(counts.shape[0], g, p, ignore)
    if bad >= 0:
        return int(bad)
    _confusion_add(counts, g, p, ignore)
    return -1


@njit(cache=True, nogil=True)
def rasterize(kind, cx, cy, size, angle, height, width):
    out = np.zeros((height, width), dtype=np.bool_)
    ca = math.cos(angle)
    sa = math.sin(angle)
    r = size / 2.0
    for yi in range(height):
        for xi in range(width):
            dx = xi + 0.5 - cx
            dy = yi + 0.5 - cy
            u = ca * dx + sa * dy
            v = -sa * dx + ca * dy
            if kind == 0:
                hit = u * u + v * v <= r * r
            elif kind == 1:
                hit = abs(u) <= r and abs(v) <= r
            elif kind == 2:
                hit = v <= r and v >= -r and abs(u) <= (v + r) * 0.5
            elif kind == 3:
                d2 = u * u + v * v
                hit = d2 <= r * r and d2 >= (0.5 * r) ** 2
            elif kind == 4:
                w3 = r / 3.0
                hit = (abs(u) <= r and abs(v) <= w3) or (abs(v) <= r and abs(u) <= w3)
            elif kind == 5:
                hit = abs(u) + abs(v) <= r
            else:
                raise ValueError("unknown shape kind")
            out[yi, xi] = hit
    return out


@njit(cache=True, nogil=True)
def _pareto_sorted(c, s):
    n = c.size
    keep = np.zeros(n, dtype=np.bool_)
    best = -np.inf
    i = 0
    while i < n:
        j = i
        while j < n and c[j] == c[i]:
            j += 1
        top = s[i]
        if top > best:
            for k in range(i, j):
                if s[k] == top:
                    keep[k] = True
            best = top
        i = j
    return keep


def pareto_mask(cost, score):
    order = np.lexsort((-score, cost))
    keep = np.zeros(cost.shape[0], dtype=np.bool_)
    keep[order] = _pareto_sorted(cost[order], score[order])
    return keep
