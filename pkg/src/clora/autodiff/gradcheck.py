from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, no_grad


def numerical_grad(f, point: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` (called on plain Tensors)."""
    x = np.array(point, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    g = out.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(Tensor(x)).item()
            flat[i] = orig - eps
            lo = f(Tensor(x)).item()
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * eps)
    return out


def autodiff_grad(f, point: np.ndarray) -> np.ndarray:
    x = Tensor(point, requires_grad=True)
    loss = f(x)
    backward(loss)
    return x.grad


def grad_check(f, point, eps: float = 1e-5) -> float:
    """Max over coordinates of |autodiff - central difference| / max(1, |central difference|)."""
    data = point.data if isinstance(point, Tensor) else np.asarray(point, dtype=np.float64)
    num = numerical_grad(f, data, eps)
    ana = autodiff_grad(f, data)
    if num.size == 0:
        return 0.0
    return float(np.max(np.abs(ana - num) / np.maximum(1.0, np.abs(num))))
