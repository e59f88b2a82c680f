"""Compare the compiled and numpy Coulomb kernels.

Usage: ``python benchmarks/bench_kernels.py [--sizes 1000 4000 16000] [--repeat 3]``
"""

import argparse
import time

import numpy as np

from partialvp import _backend


def bench(kernel, n, repeat, rng):
    src = rng.normal(size=(n, 3))
    q = rng.normal(size=n)
    tgt = rng.normal(size=(n, 3))
    args = (*tgt.T.copy(), *src.T.copy(), q, 0.01)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel.coulomb_field(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = _backend.available()
    print(f"backends: {names} (default {_backend.NAME})")
    print(f"{'n':>8} " + " ".join(f"{name + ' s':>12} {'ns/pair':>8}" for name in names) + "   speedup  max rel diff")
    for n in args.sizes:
        results = {name: bench(_backend.get(name), n, args.repeat, np.random.default_rng(n)) for name in names}
        row = f"{n:>8} " + " ".join(f"{t:>12.4f} {1e9 * t / n**2:>8.2f}" for t, _ in results.values())
        if len(names) == 2:
            (ta, oa), (tb, ob) = results["cython"], results["python"]
            diff = max(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300) for a, b in zip(oa, ob))
            row += f"   {tb / ta:7.1f}x  {diff:.1e}"
        print(row)


if __name__ == "__main__":
    main()
