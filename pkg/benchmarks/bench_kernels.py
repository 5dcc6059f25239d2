"""Compare the split-search kernel backends (compiled vs pure numpy).

Times ``best_split`` over tree-node workloads of increasing size and
verifies that both backends return identical results before timing.

Usage: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from breakoutcast._kernels import _split_np, active_backend, available_backends


def make_case(rng, n, d):
    x = rng.uniform(0, 50, size=(n, d))
    y = rng.normal(0, 3, size=n)
    idx = rng.integers(0, n, size=n).astype(np.int64)
    feats = np.asarray(rng.permutation(d)[: max(1, d // 3)], dtype=np.int64)
    return x, y, idx, feats


def time_backend(fn, cases, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for case in cases:
            fn(*case, 1, 0.0)
            fn(*case, 1, 1.0)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    backends = {"numpy": _split_np.best_split}
    if "cython" in available_backends():
        from breakoutcast._kernels import _split_cy

        backends["cython"] = _split_cy.best_split
    print(f"active backend: {active_backend()}")
    print(f"available: {', '.join(sorted(backends))}")

    rng = np.random.default_rng(0)
    for n, d, n_cases in ((64, 24, 400), (512, 24, 100), (4096, 24, 20)):
        cases = [make_case(rng, n, d) for _ in range(n_cases)]
        if "cython" in backends:
            for case in cases:
                for args in ((1, 0.0), (2, 0.0), (1, 1.0)):
                    a = backends["numpy"](*case, *args)
                    b = backends["cython"](*case, *args)
                    assert a == b, f"backend mismatch on n={n}: {a} vs {b}"
        times = {
            name: time_backend(fn, cases, repeats=3)
            for name, fn in backends.items()
        }
        line = f"n={n:5d} d={d}  " + "  ".join(
            f"{name}: {seconds * 1e3 / n_cases:8.3f} ms/node"
            for name, seconds in sorted(times.items())
        )
        if len(times) == 2:
            line += f"  speedup: {times['numpy'] / times['cython']:.1f}x"
        print(line)


if __name__ == "__main__":
    main()
