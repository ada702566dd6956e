"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--points 12]

Prints the best-of-``repeat`` wall time of each kernel under both
backends and the speed-up.  Both backends are also checked to return
identical arrays on the benchmark inputs.
"""
import argparse
import sys
import timeit

import numpy as np

from nirencert import _kernels


def random_symmetric(rng, p):
    a = rng.standard_normal((p, p))
    a = a + a.T
    np.fill_diagonal(a, np.abs(a).sum(axis=1) * rng.uniform(-1, 1, p))
    return a


def cases(rng, points):
    full = random_symmetric(rng, points)
    masks = np.arange(1, 2 ** points, dtype=np.int64)
    lam = 10 ** rng.uniform(1, 4, 40)
    pts = rng.standard_normal((40, 4))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    mats = [random_symmetric(rng, 3) for _ in range(200)]
    return {
        "least_eigenvalue x200 (3x3)": lambda k: [k.least_eigenvalue(m) for m in mats],
        f"subset_spectra ({len(masks)} subsets)": lambda k: k.subset_spectra(full, masks),
        "pair_interactions (40 bubbles)": lambda k: k.pair_interactions(lam, pts, 3, 0.5),
    }


def _same(a, b):
    if isinstance(a, (tuple, list)):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=12)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python [s]':>12s} {'cython [s]':>12s} {'speed-up':>9s}")
    for name, fn in cases(rng, args.points).items():
        if not _same(fn(_kernels.python), fn(_kernels.compiled)):
            print(f"{name}: backends disagree")
            return 2
        t_py = min(timeit.repeat(lambda: fn(_kernels.python), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(_kernels.compiled), number=1, repeat=args.repeat))
        print(f"{name:36s} {t_py:12.4g} {t_c:12.4g} {t_py / t_c:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
