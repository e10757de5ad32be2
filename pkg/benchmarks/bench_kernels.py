"""Timing comparison of the compiled and numpy Hamiltonian fill kernels.

Builds the reference chain pair at a few cutoffs, prepares the dense offset
tables once, then times both backends filling the two potential coupling
terms into a fresh matrix.  Also cross-checks that the two backends produce
bit-identical matrices.

Run:  python3 benchmarks/bench_kernels.py
"""

import math
import time

import numpy as np

from incommpw import _kernels_py

try:
    from incommpw import _kernels
except ImportError:
    _kernels = None

from incommpw.lattice import IncommensuratePair, Lattice, build_basis
from incommpw.potential import screened_coulomb


def prepare(ec):
    pair = IncommensuratePair(Lattice.chain(1.0), Lattice.chain(math.pi / 2.0))
    basis = build_basis(pair, ec)
    v1 = screened_coulomb(1.0, 1.0, pair.lat1, 4.0 * ec)
    v2 = screened_coulomb(1.0, 1.0, pair.lat2, 4.0 * ec)
    span_m, span_n = basis.index_span()
    t1, m1 = v1.difference_table(span_m)
    t2, m2 = v2.difference_table(span_n)
    args = (
        np.ascontiguousarray(basis.m, dtype=np.int64),
        np.ascontiguousarray(basis.n, dtype=np.int64),
        np.ascontiguousarray(t1.ravel(), dtype=np.complex128),
        np.ascontiguousarray(m1.ravel().astype(np.uint8)),
        np.asarray(t1.shape, dtype=np.int64),
        np.ascontiguousarray(t2.ravel(), dtype=np.complex128),
        np.ascontiguousarray(m2.ravel().astype(np.uint8)),
        np.asarray(t2.shape, dtype=np.int64),
    )
    return len(basis), args


def fill(impl, n, args):
    H = np.zeros((n, n), dtype=np.complex128)
    impl.fill_potential_terms(H, *args)
    return H


def best_time(impl, n, args, repeats=3):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fill(impl, n, args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    print(f"{'Ec':>8} {'N_c':>6} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for ec in (2000.0, 8000.0, 20000.0):
        n, args = prepare(ec)
        t_py = best_time(_kernels_py, n, args)
        if _kernels is None:
            print(f"{ec:>8.0f} {n:>6} {t_py * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>8}")
            continue
        t_c = best_time(_kernels, n, args)
        same = np.array_equal(fill(_kernels_py, n, args), fill(_kernels, n, args))
        tag = "" if same else "  MISMATCH"
        print(
            f"{ec:>8.0f} {n:>6} {t_py * 1e3:>8.1f}ms {t_c * 1e3:>8.1f}ms"
            f" {t_py / t_c:>7.1f}x{tag}"
        )


if __name__ == "__main__":
    main()
