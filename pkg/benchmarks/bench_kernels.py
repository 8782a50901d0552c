"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N wall time of each backend,
the speedup, and whether both backends returned identical results.
"""

import argparse
import time

import numpy as np

from anchorpose import kernels


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def cases(rng):
    a = rng.standard_normal((2000, 3))
    b = rng.standard_normal((2000, 3))
    pts = rng.uniform(-0.5, 0.5, (1000, 3))
    dirs = rng.standard_normal((1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    hyps = rng.uniform(-0.5, 0.5, (128, 3))
    return {
        "nearest_neighbors 2000x2000": lambda be: kernels.nearest_neighbors(a, b, backend=be),
        "count_inliers 128x1000": lambda be: kernels.count_inliers(hyps, pts, dirs, 0.99, backend=be),
        "inlier_mask 1x1000": lambda be: kernels.inlier_mask(hyps[0], pts, dirs, 0.99, backend=be),
        "max_pairwise_distance 3000": lambda be: kernels.max_pairwise_distance(
            np.vstack([a, b[:1000]]), backend=be),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    backends = sorted(kernels.BACKENDS)
    print(f"backends available: {', '.join(backends)} (default {kernels.BACKEND})")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        timings = {be: _best(lambda: fn(be), args.repeat) for be in backends}
        line = "  ".join(f"{be} {t * 1e3:9.3f} ms" for be, (t, _) in timings.items())
        if "cython" in timings:
            speedup = timings["python"][0] / timings["cython"][0]
            agree = _same(timings["python"][1], timings["cython"][1])
            line += f"  speedup {speedup:6.1f}x  identical={agree}"
        print(f"{name:30s} {line}")


if __name__ == "__main__":
    main()
