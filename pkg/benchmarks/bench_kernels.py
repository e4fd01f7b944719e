"""Compare the compiled and NumPy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend, and the speedup.
"""
import argparse
import timeit

import numpy as np

from deltamaps import kernels


def cases(rng):
    X = rng.standard_normal((40, 1200))
    pairs = np.array([(i, j) for i in range(40) for j in range(i + 1, 40)])
    ts = rng.standard_normal((20, 1200))
    return {
        "lagged_products_batch (780 pairs, T=1200, tau=20)":
            lambda k: k.lagged_products_batch(X, pairs, 20),
        "autocovariance_sums (T=1200) x40":
            lambda k: [k.autocovariance_sums(x) for x in X],
        "theil_sen_slopes (20 cells, T=1200)":
            lambda k: k.theil_sen_slopes(ts),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the NumPy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':55s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, fn in cases(rng).items():
        times = {}
        for b, mod in backends.items():
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{name:55s} " + " ".join(f"{times[b] * 1e3:8.1f}ms" for b in backends)
        if len(times) == 2:
            row += f"   {times['python'] / times['compiled']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
