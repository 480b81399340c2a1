"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def local_move(indptr, indices, weights, node_weight, order, comm, m2):
    n = len(node_weight)
    tot = np.zeros(n)
    for i in range(n):
        tot[comm[i]] += node_weight[i]
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    node_weight = node_weight.tolist()
    order = order.tolist()
    tot = tot.tolist()
    cm = comm.tolist()
    w_to = [0.0] * n
    total_moves = 0
    while True:
        moves = 0
        for i in order:
            ci = cm[i]
            ki = node_weight[i]
            seen = []
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    continue
                c = cm[j]
                if w_to[c] == 0.0:
                    seen.append(c)
                w_to[c] += weights[p]
            tot[ci] -= ki
            best = ci
            best_gain = w_to[ci] - tot[ci] * ki / m2
            for c in seen:
                gain = w_to[c] - tot[c] * ki / m2
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best = c
            tot[best] += ki
            cm[i] = best
            if best != ci:
                moves += 1
            for c in seen:
                w_to[c] = 0.0
        total_moves += moves
        if moves == 0:
            break
    comm[:] = cm
    return total_moves


def sorted_w1(a, b):
    n, m = len(a), len(b)
    a = a.tolist()
    b = b.tolist()
    i = j = 0
    q = total = 0.0
    while i < n and j < m:
        qa = (i + 1) / n
        qb = (j + 1) / m
        nxt = qa if qa < qb else qb
        total += abs(a[i] - b[j]) * (nxt - q)
        q = nxt
        if qa <= nxt:
            i += 1
        if qb <= nxt:
            j += 1
    return total
