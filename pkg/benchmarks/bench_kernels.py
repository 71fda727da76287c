"""Time each hot kernel under numba and under the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 7]

Both backends are imported in one process (the env flag only picks the
default), so the comparison is on identical inputs. The first numba call
of each kernel is a warm-up and is not timed.
"""

import argparse
import platform
import timeit

import numpy as np

from enfloc import _accel


def cases(rng):
    enf = 60.0 + np.cumsum(rng.normal(0, 0.002, 3600))
    q, _ = np.linalg.qr(rng.standard_normal((48, 2)))
    xc = np.linspace(-600, 600, 600)
    yc = np.linspace(-400, 400, 400)
    return {
        "detail_residual (3600 frames, M=3)": ("detail_residual", (enf, 3)),
        "lagged_ncc (3600 frames, +/-30 lags)": ("lagged_ncc", (enf, enf[::-1].copy(), np.arange(-30, 31))),
        "music_noise_power (dim 48, 801 bins)": ("music_noise_power", (q, np.linspace(0.11, 0.13, 801))),
        "bisector_far_mask (600x400 raster)": ("bisector_far_mask", (xc, yc, np.array([-50.0, 20.0]), np.array([80.0, -10.0]))),
        "ring_mask (600x400 raster)": ("ring_mask", (xc, yc, np.array([10.0, 0.0]), 100.0, 220.0)),
    }


def best_of(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _accel.numba_kernels is None:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"python {platform.python_version()}, numpy {np.__version__}, default backend {_accel.BACKEND}")
    print(f"{'kernel':40s} {'numpy':>12s} {'numba':>12s} {'speed-up':>9s}")
    for label, (name, kargs) in cases(np.random.default_rng(args.seed)).items():
        fast = getattr(_accel.numba_kernels, name)
        slow = getattr(_accel.numpy_kernels, name)
        fast(*kargs)
        t_np = best_of(slow, kargs, args.repeat)
        t_nb = best_of(fast, kargs, args.repeat)
        print(f"{label:40s} {1e6 * t_np:10.1f}us {1e6 * t_nb:10.1f}us {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
