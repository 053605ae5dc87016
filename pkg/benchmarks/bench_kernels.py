"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times confidence binning (used by every ECE/MCE evaluation) and the pairwise
weighted-MMCE sum (used per mini-batch by the MMCE loss), and checks that both
backends agree.
"""
import argparse
import timeit

import numpy as np

from dcacal import _kernels_py

try:
    from dcacal import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    for n in (1_000, 100_000, 1_000_000):
        conf = rng.uniform(0, 1, n)
        correct = (rng.random(n) < conf).astype(float)
        yield f"bin_stats n={n:>9,} M=15", "bin_stats", (conf, correct, 15)
    for n in (32, 128, 1024):
        conf = rng.uniform(0.3, 1, n)
        correct = (rng.random(n) < conf).astype(float)
        correct[:2] = [0, 1]
        yield f"mmce_weighted n={n:>5}", "mmce_weighted", (conf, correct, 0.4)


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    loops, _ = timer.autorange()
    return min(timer.repeat(repeat, loops)) / loops


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled kernels not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'case':<30} {'python':>12} {'cython':>12} {'speedup':>8}")
    for label, name, call_args in cases(rng):
        py = getattr(_kernels_py, name)
        t_py = best_time(py, call_args, args.repeat)
        if compiled is None:
            print(f"{label:<30} {t_py * 1e6:>10.1f}us")
            continue
        cy = getattr(compiled, name)
        for a, b in zip(py(*call_args), cy(*call_args)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        t_cy = best_time(cy, call_args, args.repeat)
        print(f"{label:<30} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
