"""Wall-clock comparison of the numba and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--N 600] [--repeat 3]

Each backend module is loaded directly, so both run in one process; the
numba timings exclude the first (compiling) call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lppcoal.kernels import load

START, NONE = 2, 3


def _lpp_inputs(N: int, key: int):
    w = -np.log(load("numpy").uniform_block(np.uint64(key), 0, 0, N, N))
    G = np.zeros((N, N))
    D = np.full((N, N), NONE, dtype=np.uint8)
    fixed = np.zeros((N, N), dtype=np.bool_)
    fixed[0, 0] = True
    D[0, 0] = START
    G[0, 0] = w[0, 0]
    return w, G, D, fixed


def _time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(mod, N: int):
    key = np.uint64(12345)
    w, G, D, fixed = _lpp_inputs(N, 12345)
    labels = np.full((N, N), -1, dtype=np.int64)
    labels[0, 0] = 0
    s = -np.log(mod.uniform_seq(key, 0, 100_000))
    a = -np.log(mod.uniform_seq(key, 100_000, 100_000)) / 0.6
    rw = mod.uniform_block(key, 0, 0, 200, 2000) - 0.55
    return {
        f"uniform_block {N}x{N}": lambda: mod.uniform_block(key, 0, 0, N, N),
        f"fill_lpp {N}x{N}": lambda: mod.fill_lpp(w, G.copy(), D.copy(), fixed),
        f"fill_lpp_labeled {N}x{N}": lambda: mod.fill_lpp_labeled(w, G.copy(), D.copy(), fixed,
                                                                 labels.copy(), np.int64(-1)),
        "lindley 1e5": lambda: mod.lindley(0.0, s, a[:-1]),
        "running_sup 200x2000": lambda: mod.running_sup(rw),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=600)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    results = {}
    for name in ("numba", "numpy"):
        mod = load(name)
        for label, fn in cases(mod, args.N).items():
            fn()  # warm-up / compile
            results.setdefault(label, {})[name] = _time(fn, args.repeat)
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for label, t in results.items():
        print(f"{label:<28}{t['numba']:>12.4f}{t['numpy']:>12.4f}{t['numpy'] / t['numba']:>10.1f}")


if __name__ == "__main__":
    main()
