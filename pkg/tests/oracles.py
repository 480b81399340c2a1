"""Independent reference implementations used by the tests."""

import itertools
from fractions import Fraction

import numpy as np


def brute_matching_w1(a, b):
    """Minimum mean |a_i - b_pi(i)| over all bijections (equal sizes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    perms = np.array(list(itertools.permutations(range(len(b)))))
    costs = np.abs(a[None, :] - b[perms]).mean(axis=1)
    return float(costs.min())


def quantile_grid_w1(a, b):
    """Integral of |Qa(q) - Qb(q)| over q, evaluated at the midpoints of the
    cells cut by both samples' quantile breakpoints (exact for step quantiles)."""
    a = sorted(a)
    b = sorted(b)
    n, m = len(a), len(b)
    cuts = sorted({Fraction(i, n) for i in range(n + 1)} | {Fraction(j, m) for j in range(m + 1)})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = (lo + hi) / 2
        qa = a[int(mid * n)]
        qb = b[int(mid * m)]
        total += float(hi - lo) * abs(qa - qb)
    return total


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def modularity_dense(adj, labels):
    adj = np.asarray(adj, dtype=float)
    m2 = adj.sum()
    k = adj.sum(axis=1)
    same = labels[:, None] == labels[None, :]
    return float(((adj - np.outer(k, k) / m2) * same).sum() / m2)


def best_modularity(adj):
    n = adj.shape[0]
    best = -1.0
    for part in set_partitions(list(range(n))):
        lab = np.empty(n, dtype=int)
        for c, block in enumerate(part):
            lab[block] = c
        best = max(best, modularity_dense(adj, lab))
    return best


def kl_hist(deg_a, deg_b, smoothing):
    support = sorted(set(deg_a) | set(deg_b))
    pa = np.array([list(deg_a).count(k) / len(deg_a) for k in support]) + smoothing
    pb = np.array([list(deg_b).count(k) / len(deg_b) for k in support]) + smoothing
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    return float(sum(p * np.log(p / q) for p, q in zip(pa, pb)))
