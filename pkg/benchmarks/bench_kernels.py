"""Compiled vs pure-Python kernels: Louvain local moving and the sorted 1-D
Wasserstein merge. Run with ``python3 benchmarks/bench_kernels.py``."""

import argparse
import time

import numpy as np

from fedc4 import _kernels_py
from fedc4.graph import sbm_generate

try:
    from fedc4 import _kernels
except ImportError:  # extension not built
    _kernels = None


def _best(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_local_move(mod, n, seed, repeats):
    g = sbm_generate([n // 4] * 4, 20.0 / n, 2.0 / n, 4, 4, seed)
    adj = g.adjacency
    adj.sort_indices()
    args = (adj.indptr.astype(np.int64), adj.indices.astype(np.int64),
            adj.data.astype(np.float64), np.asarray(adj.sum(axis=1)).ravel())
    order = np.random.default_rng(seed).permutation(n).astype(np.int64)
    m2 = float(adj.sum())

    def go():
        comm = np.arange(n, dtype=np.int64)
        mod.local_move(*args, order, comm, m2)
        return comm

    return _best(go, repeats)


def bench_w1(mod, size, seed, repeats):
    rng = np.random.default_rng(seed)
    a = np.sort(rng.standard_normal(size))
    b = np.sort(rng.standard_normal(size + size // 3 + 1))
    return _best(lambda: mod.sorted_w1(a, b), repeats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the Python backend is available")
    rows = []
    for name, bench, size in (("local_move", bench_local_move, args.nodes),
                              ("sorted_w1", bench_w1, args.samples)):
        t_py, out_py = bench(_kernels_py, size, 0, args.repeats)
        if _kernels is not None:
            t_cy, out_cy = bench(_kernels, size, 0, args.repeats)
            same = np.array_equal(out_py, out_cy)
            rows.append((name, size, t_py, t_cy, t_py / t_cy, same))
        else:
            rows.append((name, size, t_py, float("nan"), float("nan"), None))
    print(f"{'kernel':<12}{'size':>8}{'python s':>12}{'cython s':>12}{'speedup':>10}  identical")
    for name, size, t_py, t_cy, sp, same in rows:
        print(f"{name:<12}{size:>8}{t_py:>12.4f}{t_cy:>12.4f}{sp:>10.1f}  {same}")


if __name__ == "__main__":
    main()
