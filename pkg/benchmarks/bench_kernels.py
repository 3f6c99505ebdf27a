"""Time the numba and numpy versions of each kernel on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 20]

The first numba call compiles; it is reported separately and excluded from
the timings.
"""

import argparse
import time

import numpy as np

from homemoe import kernels
from homemoe._accel import HAS_NUMBA


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    z = rng.normal(size=(256, 16))
    gamma, beta = rng.normal(size=16), rng.normal(size=16)
    _, xhat, _, _, inv_std = kernels.bn_forward_np(z, gamma, beta, 1e-5)
    dout = rng.normal(size=z.shape)
    sizes = rng.integers(50, 150, size=750)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(starts[-1])
    scores, labels = rng.random(n), (rng.random(n) < 0.1).astype(np.float64)
    return [
        ("bn_forward 256x16", kernels.bn_forward_jit, kernels.bn_forward_np, (z, gamma, beta, 1e-5)),
        ("bn_backward 256x16", kernels.bn_backward_jit, kernels.bn_backward_np, (dout, xhat, inv_std, gamma)),
        (f"grouped_auc {n} rows / 750 users", kernels.grouped_auc_jit, kernels.grouped_auc_np,
         (scores, labels, starts)),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    print(f"active backend: {kernels.backend()}  (numba importable: {HAS_NUMBA})")
    print(f"{'kernel':<36} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, jit, npy, inputs in cases(np.random.default_rng(args.seed)):
        t = time.perf_counter()
        jit(*inputs)
        compile_s = time.perf_counter() - t
        tj = _time(jit, inputs, args.repeat)
        tn = _time(npy, inputs, args.repeat)
        print(f"{name:<36} {tj * 1e3:>10.3f} {tn * 1e3:>10.3f} {tn / tj:>7.1f}x   (first call {compile_s:.2f}s)")


if __name__ == "__main__":
    main()
