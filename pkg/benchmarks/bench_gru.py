"""Time the GRU recurrence kernels: compiled extension vs numpy fallback.

    python benchmarks/bench_gru.py [--steps 50 --batch 128 --hidden 64 --repeat 10]
"""
import argparse
import time

import numpy as np

from fetsgan.engine import _gru_numpy

try:
    from fetsgan.engine import _gru_ext
except ImportError:
    _gru_ext = None


def _time(kernel, args, dhs, repeat):
    gx, wh, bh, h0, mask = args
    kernel.gru_forward(*args)  # warm-up
    fwd = bwd = 0.0
    for _ in range(repeat):
        t0 = time.perf_counter()
        hs, cache = kernel.gru_forward(gx, wh, bh, h0, mask)
        t1 = time.perf_counter()
        kernel.gru_backward(dhs, wh, h0, mask, hs, cache)
        t2 = time.perf_counter()
        fwd += t1 - t0
        bwd += t2 - t1
    return fwd / repeat * 1e3, bwd / repeat * 1e3


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    a = p.parse_args(argv)

    rng = np.random.default_rng(0)
    T, B, H, dt = a.steps, a.batch, a.hidden, np.dtype(a.dtype)
    args = (
        rng.normal(size=(T, B, 3 * H)).astype(dt),
        (rng.uniform(-1, 1, size=(H, 3 * H)) / np.sqrt(H)).astype(dt),
        np.zeros(3 * H, dt),
        np.zeros((B, H), dt),
        np.ones((T, B), dt),
    )
    dhs = rng.normal(size=(T, B, H)).astype(dt)

    kernels = [("numpy", _gru_numpy)]
    if _gru_ext is not None:
        kernels.append(("cython", _gru_ext))
    else:
        print("compiled extension not built; timing numpy only")
    print(f"T={T} B={B} H={H} dtype={dt}")
    base = None
    for name, k in kernels:
        f, b = _time(k, args, dhs, a.repeat)
        base = base or f + b
        print(f"{name:>7}: forward {f:8.2f} ms  backward {b:8.2f} ms  speedup {base / (f + b):5.2f}x")


if __name__ == "__main__":
    main()
