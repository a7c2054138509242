"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times im2col, col2im and the Haar pair on representative shapes, then one
full training step of the tiny model, under each available backend.
"""

import argparse
import time

import numpy as np

from thunder import kernels
from thunder.autodiff import Tensor, backward
from thunder.losses import loss_total
from thunder.network import ModelConfig, Thunder


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    x = rng.standard_normal((8, 48, 16, 16)).astype(np.float32)
    cols = np.empty((8, 48 * 9, 256), dtype=np.float32)
    img = rng.standard_normal((8, 12, 32, 32)).astype(np.float32)
    packed = np.empty((8, 48, 16, 16), dtype=np.float32)
    back = np.empty_like(img)
    gx = np.zeros_like(x)
    return {
        "im2col 8x48x16x16 k3": lambda: kernels.im2col(x, cols, 3, 3, 1, 1),
        "col2im 8x48x16x16 k3": lambda: (gx.fill(0), kernels.col2im(cols, gx, 3, 3, 1, 1)),
        "haar_forward 8x12x32x32": lambda: kernels.haar_forward(img, packed),
        "haar_inverse 8x48x16x16": lambda: kernels.haar_inverse(packed, back),
    }


def train_step_case(rng):
    model = Thunder(ModelConfig(K=2, M=1))
    clean = rng.random((4, 3, 32, 32)).astype(np.float32)
    noisy = clean + 0.1 * rng.standard_normal(clean.shape).astype(np.float32)

    def step():
        model.zero_grad()
        backward(loss_total(model(Tensor(noisy)), clean).total)

    return step


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    results = {}
    for name in backends:
        kernels.set_backend(name)
        rng = np.random.default_rng(0)
        cases = kernel_cases(rng)
        cases["train step K=2 M=1 4x3x32x32"] = train_step_case(rng)
        for label, fn in cases.items():
            fn()  # warm up
            results.setdefault(label, {})[name] = best_of(fn, args.repeat)
    print("case\t" + "\t".join(f"{b}_ms" for b in backends) + ("\tspeedup" if len(backends) > 1 else ""))
    for label, row in results.items():
        cells = [f"{row[b] * 1e3:.3f}" for b in backends]
        if len(backends) > 1:
            cells.append(f"{row['numpy'] / row['cython']:.2f}x")
        print(label + "\t" + "\t".join(cells))


if __name__ == "__main__":
    main()
