#!/usr/bin/env python3
"""Benchmark the compiled bilinear kernels against the numpy fallback.

The gather/scatter pair sits inside every crop-resize and warp (and their
adjoints), i.e. it runs several times per attack iteration. Run after an
editable install:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from patchfield.ops.kernels import available_backends


def bench(fn, *args, repeats=20):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; benchmarking numpy only")
    rng = np.random.default_rng(0)
    print(f"{'size':>12} {'op':>8} " + " ".join(f"{n:>12}" for n in backends) + "   speedup")
    for h, w in ((64, 64), (256, 144), (900, 1600)):
        src = rng.random((h, w, 3))
        n = h * w
        ys = rng.uniform(-1, h, size=n)
        xs = rng.uniform(-1, w, size=n)
        cot = rng.random((n, 3))
        for op, args in (("gather", (src, ys, xs)), ("scatter", (cot, ys, xs, h, w))):
            times = {name: bench(getattr(mod, "bilinear_" + op), *args)
                     for name, mod in backends.items()}
            ratio = (times["numpy"] / times["compiled"]) if "compiled" in times else 1.0
            print(f"{h:>5}x{w:<6} {op:>8} "
                  + " ".join(f"{times[nm] * 1e3:>10.3f}ms" for nm in backends)
                  + f"   {ratio:>6.1f}x")


if __name__ == "__main__":
    main()
