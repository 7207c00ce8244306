"""Time the compiled regression-tree kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 400] [--d 20] [--trees 10] [--repeat 3]

Both backends build bit-identical trees from the same seed; the script
checks that before reporting timings.
"""

import argparse
import importlib
import time

import numpy as np


def _load(name):
    try:
        return importlib.import_module(f"knobforge.{name}")
    except ImportError:
        return None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_forest(kernels, X, y, trees, seed=7):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    max_features = int(np.ceil(5 / 6 * d))
    built = []
    for _ in range(trees):
        rows = rng.integers(0, n, n)
        built.append(kernels.build_tree(X[rows], y[rows], 3, max_features, int(rng.integers(1, 2**63 - 1))))
    return built


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--queries", type=int, default=2058)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.random((args.n, args.d))
    y = 100 * (1 - 4 * (X[:, 0] - 0.6) ** 2).clip(0) + 40 * X[:, 1] + rng.normal(0, 1, args.n)
    Q = rng.random((args.queries, args.d))

    backends = {"python": _load("_forest_py"), "cython": _load("_forest_ext")}
    results = {}
    for name, kernels in backends.items():
        if kernels is None:
            print(f"{name:7s} unavailable (extension not built)")
            continue
        fit_t, forest = _time(lambda k=kernels: run_forest(k, X, y, args.trees), args.repeat)
        pred_t, preds = _time(lambda k=kernels, f=forest: [k.predict_tree(*t[:5], Q) for t in f], args.repeat)
        results[name] = (fit_t, pred_t, forest, preds)
        print(f"{name:7s} fit {fit_t * 1e3:9.2f} ms   predict {pred_t * 1e3:8.2f} ms")

    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        same = all(all(np.array_equal(a, b) for a, b in zip(tp, tc)) for tp, tc in zip(py[2], cy[2]))
        same = same and all(np.array_equal(a, b) for a, b in zip(py[3], cy[3]))
        print(f"identical trees and predictions: {same}")
        print(f"speedup fit x{py[0] / cy[0]:.1f}, predict x{py[1] / cy[1]:.1f}")


if __name__ == "__main__":
    main()
