"""Timing comparison of the compiled registration kernels against the
pure-numpy fallback.

Runs bilinear warping and the demons force on square images of increasing
size and reports per-call wall time for both backends plus the speedup.
Invoke as ``python benchmarks/bench_kernels.py [--sizes 64,128,256]``.
"""

import argparse
import timeit

import numpy as np

from perfmoco import _kernels_py

try:
    from perfmoco import _kernels
except ImportError:
    _kernels = None


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(n, n))
    other = rng.normal(size=(n, n))
    u_row = rng.normal(scale=1.5, size=(n, n))
    u_col = rng.normal(scale=1.5, size=(n, n))
    return img, other, u_row, u_col


def _time(fn, repeat=5, number=3):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench(sizes):
    backends = [("python", _kernels_py)]
    if _kernels is not None:
        backends.append(("cython", _kernels))
    header = f"{'kernel':<14}{'size':>6}"
    for name, _ in backends:
        header += f"{name + ' [ms]':>14}"
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for n in sizes:
        img, other, u_row, u_col = _inputs(n)
        for kernel, args in (("bilinear_warp", (img, u_row, u_col)),
                             ("demons_force", (img, other, 2.0))):
            times = []
            for _, mod in backends:
                fn = getattr(mod, kernel)
                times.append(_time(lambda: fn(*args)))
            line = f"{kernel:<14}{n:>6}"
            for t in times:
                line += f"{t * 1e3:>14.3f}"
            if len(times) == 2:
                line += f"{times[0] / times[1]:>9.1f}x"
            print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="64,128,256",
                        help="comma-separated square image sizes")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    if _kernels is None:
        print("compiled extension not available; timing fallback only")
    bench(sizes)


if __name__ == "__main__":
    main()
