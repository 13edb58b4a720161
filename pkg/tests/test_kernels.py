import numpy as np
import pytest

from clora import _kernels as K

pytestmark = pytest.mark.skipif(K.numba_impl is None, reason="numba not installed")

NP, NB = K.numpy_impl, K.numba_impl


def test_layernorm_parity(rng):
    x, g, b = rng.normal(size=(7, 9)), rng.normal(size=9), rng.normal(size=9)
    y1, xh1, r1 = NP.layernorm_forward(x, g, b, 1e-5)
    y2, xh2, r2 = NB.layernorm_forward(x, g, b, 1e-5)
    assert np.allclose(y1, y2, atol=1e-12) and np.allclose(r1, r2, atol=1e-12)
    gy = rng.normal(size=x.shape)
    for a, c in zip(NP.layernorm_backward(gy, xh1, r1, g), NB.layernorm_backward(gy, xh2, r2, g)):
        assert np.allclose(a, c, atol=1e-12)


def test_softmax_parity(rng):
    x = rng.normal(size=(11, 5)) * 10
    y1, y2 = NP.softmax_forward(x), NB.softmax_forward(x)
    assert np.allclose(y1, y2, atol=1e-14)
    gy = rng.normal(size=x.shape)
    assert np.allclose(NP.softmax_backward(y1, gy), NB.softmax_backward(y2, gy), atol=1e-13)


def test_gelu_parity(rng):
    x = rng.normal(size=(3, 50)) * 3
    y1, t1 = NP.gelu_forward(x)
    y2, t2 = NB.gelu_forward(x)
    assert np.allclose(y1, y2, atol=1e-14)
    gy = rng.normal(size=x.shape)
    assert np.allclose(NP.gelu_backward(x, t1, gy), NB.gelu_backward(x, t2, gy), atol=1e-13)


def test_upsample_backward_parity(rng):
    g = rng.normal(size=(2, 3, 8, 12))
    assert np.allclose(NP.upsample_nearest_backward(g, 4), NB.upsample_nearest_backward(g, 4), atol=1e-12)


def test_confusion_parity(rng):
    gt = rng.integers(0, 5, 300).astype(np.uint8)
    gt[::7] = 255
    pred = rng.integers(0, 5, 300).astype(np.uint8)
    c1, c2 = np.zeros((5, 5), np.int64), np.zeros((5, 5), np.int64)
    assert NP.confusion_accumulate(c1, gt, pred, 255) == -1
    assert NB.confusion_accumulate(c2, gt, pred, 255) == -1
    assert np.array_equal(c1, c2)
    pred[3] = 9
    assert NP.confusion_accumulate(c1, gt, pred, 255) == NB.confusion_accumulate(c2, gt, pred, 255) == 9


@pytest.mark.parametrize("kind", range(6))
def test_rasterize_parity(kind):
    a = NP.rasterize(kind, 15.3, 14.8, 11.0, 0.7, 32, 32)
    b = NB.rasterize(kind, 15.3, 14.8, 11.0, 0.7, 32, 32)
    assert a.any() and np.array_equal(a, b)


def test_pareto_mask_parity(rng):
    for _ in range(20):
        cost = rng.integers(0, 10, 40).astype(float)
        score = rng.integers(0, 10, 40).astype(float)
        assert np.array_equal(NP.pareto_mask(cost, score), NB.pareto_mask(cost, score))


def test_backend_flag():
    assert K.BACKEND in ("numba", "numpy")
