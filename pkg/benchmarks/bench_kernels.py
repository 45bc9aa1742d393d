"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [repeats]

The same kernels are selected at import time by the TEMPKG_NUMBA env flag;
here both implementations are timed explicitly regardless of the flag.
"""

import sys
import time

import numpy as np

from tempkg import _kernels


def bench(label, fn, setup, repeats):
    # one warm-up call so jit compilation stays out of the numbers
    fn(*setup())
    times = []
    for _ in range(repeats):
        args = setup()
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    best = min(times)
    print(f"  {label:<10s} {best * 1e3:9.3f} ms")
    return best


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 7
    rng = np.random.default_rng(0)
    print(f"numba available: {_kernels._HAVE_NUMBA}   selected backend: "
          f"{_kernels.BACKEND}   repeats: {repeats}")

    n_rows, n_edges, dim = 5_000, 200_000, 128
    idx = rng.integers(0, n_rows, size=n_edges)
    src = rng.normal(size=(n_edges, dim))
    print(f"\nscatter_add_rows: {n_edges} rows of dim {dim} into {n_rows}")
    t_np = bench("numpy", _kernels.scatter_add_rows_numpy,
                 lambda: (np.zeros((n_rows, dim)), idx, src), repeats)
    if _kernels.scatter_add_rows_numba is not None:
        t_nb = bench("numba", _kernels.scatter_add_rows_numba,
                     lambda: (np.zeros((n_rows, dim)), idx, src), repeats)
        print(f"  speedup    {t_np / t_nb:9.2f}x")

    n_ent, n_tuples = 10_000, 2_000_000
    ents = rng.integers(0, n_ent, size=n_tuples)
    times_arr = rng.integers(0, 365, size=n_tuples)
    print(f"\ndecay_accumulate: {n_tuples} tuples over {n_ent} entities")
    t_np = bench("numpy", _kernels.decay_accumulate_numpy,
                 lambda: (np.zeros(n_ent), ents, times_arr, 200, 0.1), repeats)
    if _kernels.decay_accumulate_numba is not None:
        t_nb = bench("numba", _kernels.decay_accumulate_numba,
                     lambda: (np.zeros(n_ent), ents, times_arr, 200, 0.1), repeats)
        print(f"  speedup    {t_np / t_nb:9.2f}x")

    shape = (2_000, 128)
    grad = rng.normal(size=shape)
    print(f"\nadam_update: parameter block {shape}")

    def adam_args():
        return (rng.normal(size=shape), grad, np.zeros(shape), np.zeros(shape),
                0.001, 0.9, 0.999, 1e-8, 0.1, 0.001)

    t_np = bench("numpy", _kernels.adam_update_numpy, adam_args, repeats)
    if _kernels.adam_update_numba is not None:
        t_nb = bench("numba", _kernels.adam_update_numba, adam_args, repeats)
        print(f"  speedup    {t_np / t_nb:9.2f}x")


if __name__ == "__main__":
    main()
