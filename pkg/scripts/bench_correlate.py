#!/usr/bin/env python3
"""Time the correlation volume across feature sizes and neighbourhood sides."""
import argparse
import time

import numpy as np

from calivis.temporal import correlate


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--sides", type=int, nargs="+", default=[5, 11, 21])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'HxW':>8} {'C':>4} {'side':>4} {'ms':>8}")
    for s in args.sizes:
        a = rng.normal(size=(s, s, args.channels)).astype(np.float32)
        b = rng.normal(size=(s, s, args.channels)).astype(np.float32)
        for d in args.sides:
            ms = 1000 * best_of(lambda: correlate(a, b, d), args.repeats)
            print(f"{s:>4}x{s:<3} {args.channels:>4} {d:>4} {ms:>8.1f}")


if __name__ == "__main__":
    main()
