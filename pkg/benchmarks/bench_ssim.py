"""Benchmark the compiled SSIM kernel against the pure-numpy fallback.

Usage: python3 benchmarks/bench_ssim.py [--sizes 64,128,256] [--repeats 5]
"""

import argparse
import time

import numpy as np

from fsslab.metrics import _ssim_np
from fsslab.metrics.ssim import _ssim_cy, gaussian_window


def time_backend(fn, a, b, win, c1, c2, repeats):
    fn(a, b, win, c1, c2)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(a, b, win, c1, c2)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="64,128,256,512",
                        help="comma-separated square image sizes")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _ssim_cy is None:
        raise SystemExit("compiled kernel not built; reinstall the package "
                         "with Cython available")

    sizes = [int(s) for s in args.sizes.split(",")]
    win = gaussian_window()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    rng = np.random.default_rng(0)

    print(f"{'size':>6} {'compiled':>12} {'numpy':>12} {'speedup':>8}")
    for size in sizes:
        a = np.ascontiguousarray(
            rng.integers(0, 256, (size, size)).astype(float))
        b = np.ascontiguousarray(
            rng.integers(0, 256, (size, size)).astype(float))
        got_cy = _ssim_cy.ssim_mean(a, b, win, c1, c2)
        got_np = _ssim_np.ssim_mean(a, b, win, c1, c2)
        assert abs(got_cy - got_np) < 1e-12, "backends disagree"
        t_cy = time_backend(_ssim_cy.ssim_mean, a, b, win, c1, c2,
                            args.repeats)
        t_np = time_backend(_ssim_np.ssim_mean, a, b, win, c1, c2,
                            args.repeats)
        print(f"{size:>6} {t_cy * 1e3:>10.2f}ms {t_np * 1e3:>10.2f}ms "
              f"{t_np / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
