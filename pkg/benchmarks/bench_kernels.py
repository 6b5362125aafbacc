"""Time the numba kernels against their pure-numpy counterparts.

Usage::

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Both tables live side by side in ``strongopen._kernels``; the environment
flag ``STRONGOPEN_PURE_NUMPY=1`` only selects which one the package uses.
Each kernel is also checked for agreement between the two paths.
"""

import argparse
import timeit

import numpy as np

from strongopen import _kernels


def _cases(size, rng):
    x = rng.exponential(3.0, size)
    t = np.concatenate([[0.0], rng.exponential(2.0, size - 1)])
    vals = rng.standard_normal(size) * 10.0 ** rng.integers(-8, 8, size)
    cols = rng.standard_normal((size, 4))
    return {
        "e1": (x,),
        "log_e1": (x * 100,),
        "theta_integrand": (t, 0.5),
        "theta_alt_integrand": (t, 0.5),
        "neumaier_sum": (vals,),
        "neumaier_sum_columns": (cols,),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    if not _kernels.NUMBA_KERNELS:
        print("numba is not available; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    cases = _cases(args.size, rng)
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, call_args in cases.items():
        np_fn = _kernels.NUMPY_KERNELS[name]
        nb_fn = _kernels.NUMBA_KERNELS[name]
        ref = np.asarray(np_fn(*call_args))
        got = np.asarray(nb_fn(*call_args))  # first call compiles
        with np.errstate(all="ignore"):
            diff = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)
        diff = float(np.nanmax(np.where(got == ref, 0.0, diff)))
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}{diff:>15.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
