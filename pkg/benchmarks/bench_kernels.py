"""Time each hot kernel on the numba and numpy paths, plus one training epoch per backend.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--skip-epoch]

Shapes match the desk model (batch 6, 64 tokens, width 64, 32x32 pixels).
The epoch comparison runs in subprocesses because the backend is fixed at
import time (``CLORA_NUMBA``).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from clora import _kernels as K

EPOCH_SNIPPET = """
import time
from clora.continual import TrainConfig, build_schedule, new_state, train_task
from clora.data import SegDataset, SynthSpec, generate_arrays
images, labels, train, val = generate_arrays(SynthSpec(samples_per_class=10))
data = SegDataset.from_arrays(images, labels, train, val, 6)
state = new_state("FT", build_schedule("joint", 6), seed=0)
t = time.perf_counter()
train_task(state, "FT", data, TrainConfig(epochs=1))
print(time.perf_counter() - t)
"""


def cases(rng):
    tokens = rng.normal(size=(6 * 64, 64))
    gamma, beta = rng.normal(size=64), rng.normal(size=64)
    _, xhat, rstd = K.numpy_impl.layernorm_forward(tokens, gamma, beta, 1e-5)
    scores = rng.normal(size=(6 * 4 * 64, 64))
    probs = K.numpy_impl.softmax_forward(scores)
    hidden = rng.normal(size=(6, 64, 128))
    _, tanh_t = K.numpy_impl.gelu_forward(hidden)
    grad_px = rng.normal(size=(6, 6, 32, 32))
    gt = rng.integers(0, 6, 6 * 1024 * 8)
    pred = rng.integers(0, 6, gt.size)
    cost, score = rng.uniform(0, 100, 2000), rng.uniform(0, 100, 2000)
    return {
        "layernorm_forward": lambda m: m.layernorm_forward(tokens, gamma, beta, 1e-5),
        "layernorm_backward": lambda m: m.layernorm_backward(tokens, xhat, rstd, gamma),
        "softmax_forward": lambda m: m.softmax_forward(scores),
        "softmax_backward": lambda m: m.softmax_backward(probs, scores),
        "gelu_forward": lambda m: m.gelu_forward(hidden),
        "gelu_backward": lambda m: m.gelu_backward(hidden, tanh_t, hidden),
        "upsample_backward": lambda m: m.upsample_nearest_backward(grad_px, 4),
        "confusion_accumulate": lambda m: m.confusion_accumulate(np.zeros((6, 6), np.int64), gt, pred, 255),
        "rasterize": lambda m: m.rasterize(2, 16.0, 15.5, 12.0, 0.4, 32, 32),
        "pareto_mask": lambda m: m.pareto_mask(cost, score),
    }


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles here)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def epoch_time(numba: bool) -> float:
    env = dict(os.environ, CLORA_NUMBA="1" if numba else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-epoch", action="store_true")
    args = ap.parse_args()
    if K.numba_impl is None:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}")
    for name, call in cases(rng).items():
        t_np = best_of(lambda: call(K.numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(K.numba_impl), args.repeat)
        print(f"{name:<22}{1e3 * t_np:>11.3f}{1e3 * t_nb:>11.3f}{t_np / t_nb:>8.2f}x")

    if not args.skip_epoch:
        epoch_time(True)  # populate the numba cache before timing
        t_np, t_nb = epoch_time(False), epoch_time(True)
        print(f"\none FT epoch, 40 images: numpy {t_np:.2f}s  numba {t_nb:.2f}s  ({t_np / t_nb:.2f}x)")


if __name__ == "__main__":
    main()
