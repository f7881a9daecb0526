"""Time the compiled kernels against the numpy fallback.

Run from the repository root after building the extension::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from qkdnet import _kernels
from qkdnet._kernels import _python
from qkdnet.reconciliation import cascade_plan


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cascade_case(n, qber, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < qber).astype(np.uint8)
    ks, perms = cascade_plan(n, qber, rng)
    return a, b, perms, ks


def toeplitz_case(n, m, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, n + m - 1, dtype=np.uint8), rng.integers(0, 2, n, dtype=np.uint8), m


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    compiled = _kernels.compiled()
    if compiled is None:
        print("compiled extension not built; only the fallback is timed")
    cases = [("cascade", n, cascade_case(n, 0.03)) for n in (10_000, 100_000, 1_000_000)]
    cases += [("toeplitz", f"{n}x{m}", toeplitz_case(n, m)) for n, m in
              ((10_000, 5_000), (100_000, 50_000), (100_000, 64))]

    print(f"{'kernel':<10}{'size':>16}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, size, case in cases:
        py = best_of(lambda: getattr(_python, name if name == "cascade" else "toeplitz_hash")(*case),
                     args.repeat)
        if compiled is not None:
            cy = best_of(lambda: getattr(compiled, name if name == "cascade" else "toeplitz_hash")(*case),
                         args.repeat)
            print(f"{name:<10}{size:>16}{py:>12.4f}{cy:>12.4f}{py / cy:>10.1f}")
        else:
            print(f"{name:<10}{size:>16}{py:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
