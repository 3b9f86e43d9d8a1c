"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat R] [--trials T]
"""
import argparse
import timeit

import numpy as np

from rissec import _kernels
from rissec.channel import crandn


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=100, help="trials per Monte Carlo block")
    ap.add_argument("--M", type=int, default=128)
    ap.add_argument("--N", type=int, default=256)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--M-E", dest="M_E", type=int, default=4)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    Y, Z = crandn(rng, (args.N, args.N)), crandn(rng, (args.N, args.N))
    H = crandn(rng, (args.trials, args.M, args.K))
    block = (crandn(rng, (args.trials, args.M)), H, H, crandn(rng, (args.trials, args.M, args.M_E)), 0, 0.0)

    cases = [
        (f"diag_of_product N={args.N}", _kernels.diag_of_product_numpy, _kernels.diag_of_product_numba, (Y, Z)),
        (f"trial_statistics T={args.trials} M={args.M} K={args.K}",
         _kernels.trial_statistics_numpy, _kernels.trial_statistics_numba, block),
    ]
    print(f"{'kernel':<44}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, f_np, f_nb, a in cases:
        f_nb(*a)  # compile outside the timed region
        t_np = _best(lambda: f_np(*a), args.repeat)
        t_nb = _best(lambda: f_nb(*a), args.repeat)
        print(f"{name:<44}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.2f}")


if __name__ == "__main__":
    main()
