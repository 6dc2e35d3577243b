#!/usr/bin/env python3
"""Time the jit kernels against their pure-numpy fallbacks.

Covers the two hot paths behind the stability constants: the grouped
per-offset maxima used by the Sjostrand norm, and the multistart
projected-subgradient descent behind the non-certified lower bounds.

Run as ``python benchmarks/bench_backends.py``; pass --sizes / --starts
to change the workload.  Both code paths are imported directly, so the
LOCOP_BACKEND variable does not need to be set.
"""

import argparse
import time

import numpy as np

from locop import _accel, corpus


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_group_max(n, repeats, rng):
    keys = rng.integers(-(1 << 18), 1 << 18, size=n).astype(np.int64)
    values = rng.standard_normal(n)
    rows = []
    t_np = best_of(lambda: _accel._group_max_numpy(keys, values), repeats)
    rows.append(("group_max", f"n={n}", "numpy", t_np, 1.0))
    if _accel._HAVE_NUMBA:
        _accel._group_max_numba(keys[:64], values[:64])  # compile
        t_nb = best_of(lambda: _accel._group_max_numba(keys, values), repeats)
        rows.append(("group_max", f"n={n}", "numba", t_nb, t_np / t_nb))
    return rows


def bench_descend(window, n_starts, repeats, rng):
    A = corpus.banded_random(window, band=2, seed=3)
    csr = A.csr()
    starts = rng.standard_normal((n_starts, window))
    args_nb = (
        np.ascontiguousarray(csr.data, dtype=np.float64),
        np.ascontiguousarray(csr.indices, dtype=np.int64),
        np.ascontiguousarray(csr.indptr, dtype=np.int64),
        csr.shape[0],
    )
    rows = []
    for p in (1.0, 2.0, float("inf")):
        label = f"w={window} starts={n_starts} p={p:g}"
        t_np = best_of(
            lambda: _accel._descend_numpy(csr, starts, p, 0.25, 1e-10, 5000),
            repeats)
        rows.append(("descend_lp", label, "numpy", t_np, 1.0))
        if _accel._HAVE_NUMBA:
            enc = _accel._encode_p(p)
            _accel._descend_many_nb(*args_nb, starts[:1], enc, 0.25, 1e-10, 50)
            t_nb = best_of(
                lambda: _accel._descend_many_nb(*args_nb, starts, enc,
                                                0.25, 1e-10, 5000),
                repeats)
            rows.append(("descend_lp", label, "numba", t_nb, t_np / t_nb))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="100000,1000000",
                    help="comma list of group_max input sizes")
    ap.add_argument("--window", type=int, default=128)
    ap.add_argument("--starts", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    if not _accel._HAVE_NUMBA:
        print("numba unavailable: timing the numpy fallback only")

    rows = []
    for n in (int(s) for s in args.sizes.split(",")):
        rows += bench_group_max(n, args.repeats, rng)
    rows += bench_descend(args.window, args.starts, args.repeats, rng)

    width = max(len(r[1]) for r in rows)
    print(f"{'kernel':<12} {'case':<{width}} {'backend':<8} "
          f"{'best (ms)':>10} {'speedup':>8}")
    for kernel, case, backend, seconds, speedup in rows:
        print(f"{kernel:<12} {case:<{width}} {backend:<8} "
              f"{seconds * 1e3:>10.2f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
