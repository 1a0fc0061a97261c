"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are always importable; the AUPREF_NUMBA flag only decides which
one the library uses by default. Results are checked for equality before timing.
"""

import argparse
import time

import numpy as np

from aupref import kernels
from aupref._accel import NUMBA_ENABLED


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    n_clips, n_frames = 2000, 150
    values = rng.normal(0.3, 0.2, size=(n_frames, 12))
    ok = rng.random(n_frames) > 0.05
    clip = (values, ok, 3)
    diff = rng.normal(0.0, 0.3, size=3000)
    diff[rng.random(diff.size) < 0.1] = 0.0
    thresholds = np.round(np.arange(51) * 0.02, 12)
    diffs = rng.normal(0.0, 1.0, size=(66, 3000))
    ranks = np.arange(2, 2 * 40 + 1, 2, dtype=np.int64)
    return [
        (f"window_means ({n_clips} clips x {n_frames} frames)", "window_means", clip, n_clips),
        ("threshold_counts (3000 pairs x 51 d)", "threshold_counts", (diff, thresholds), 20),
        ("sign_counts (66 weightings x 3000 pairs)", "sign_counts", (diffs,), 1),
        ("rank_sum_counts (N=40, pick 6)", "rank_sum_counts", (ranks, 6), 1),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"library default backend: {kernels.BACKEND} (numba enabled: {NUMBA_ENABLED})")
    print(f"{'kernel':48s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, name, fargs, calls in cases(rng):
        fast = getattr(kernels.numba_impl, name)
        slow = getattr(kernels.numpy_impl, name)
        a, b = fast(*fargs), slow(*fargs)  # also triggers compilation
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            if not np.array_equal(x, y, equal_nan=True):
                raise SystemExit(f"{name}: backends disagree")

        def loop(fn):
            return lambda: [fn(*fargs) for _ in range(calls)]

        t_np = best_of(loop(slow), (), args.repeat)
        t_nb = best_of(loop(fast), (), args.repeat)
        print(f"{label:48s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
