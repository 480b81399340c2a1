# cython: language_level=3
"""Compiled loop kernels. Must stay arithmetic-for-arithmetic identical to
``_kernels_py`` so both backends give bit-identical results."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def local_move(const long long[::1] indptr, const long long[::1] indices,
               const double[::1] weights, const double[::1] node_weight,
               const long long[::1] order, long long[::1] comm, double m2):
    cdef Py_ssize_t n = node_weight.shape[0]
    cdef double[::1] tot = np.zeros(n, dtype=np.float64)
    cdef double[::1] w_to = np.zeros(n, dtype=np.float64)
    cdef long long[::1] seen = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j, p, t, n_seen
    cdef long long ci, c, best
    cdef double ki, gain, best_gain
    cdef long long moves, total_moves = 0

    for i in range(n):
        tot[comm[i]] += node_weight[i]

    while True:
        moves = 0
        for t in range(n):
            i = order[t]
            ci = comm[i]
            ki = node_weight[i]
            n_seen = 0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    continue
                c = comm[j]
                if w_to[c] == 0.0:
                    seen[n_seen] = c
                    n_seen += 1
                w_to[c] += weights[p]
            tot[ci] -= ki
            best = ci
            best_gain = w_to[ci] - tot[ci] * ki / m2
            for p in range(n_seen):
                c = seen[p]
                gain = w_to[c] - tot[c] * ki / m2
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best = c
            tot[best] += ki
            comm[i] = best
            if best != ci:
                moves += 1
            for p in range(n_seen):
                w_to[seen[p]] = 0.0
        total_moves += moves
        if moves == 0:
            break
    return total_moves


def sorted_w1(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef double q = 0.0, qa, qb, nxt, total = 0.0, diff
    while i < n and j < m:
        qa = (i + 1) / <double>n
        qb = (j + 1) / <double>m
        nxt = qa if qa < qb else qb
        diff = a[i] - b[j]
        if diff < 0:
            diff = -diff
        total += diff * (nxt - q)
        q = nxt
        if qa <= nxt:
            i += 1
        if qb <= nxt:
            j += 1
    return total
