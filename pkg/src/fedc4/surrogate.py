"""Cora-shaped synthetic citation graph.

Used only as a stand-in when the real dataset directory is not available:
same node count, class histogram, vocabulary size, edge count and rough
homophily, with sparse binary bag-of-words features. Numbers measured on it
are not Cora numbers.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, random_splits

CORA_CLASS_SIZES = (351, 217, 418, 818, 426, 298, 180)
CORA_VOCAB = 1433
CORA_EDGES = 5429


def cora_like(seed: int = 0, homophily: float = 0.81, words_per_node: int = 18,
              topic_weight: float = 0.2, topic_size: int = 150,
              degree_exponent: float = 2.5) -> Graph:
    rng = np.random.default_rng([seed, 1433])
    sizes = np.asarray(CORA_CLASS_SIZES)
    n, c, d = int(sizes.sum()), len(sizes), CORA_VOCAB
    labels = rng.permutation(np.repeat(np.arange(c), sizes))

    # word distributions: shared Zipf background plus a class topic
    background = 1.0 / np.arange(1, d + 1) ** 0.8
    background = rng.permutation(background / background.sum())
    topics = np.zeros((c, d))
    for k in range(c):
        words = rng.choice(d, size=topic_size, replace=False)
        topics[k, words] = rng.dirichlet(np.ones(topic_size))
    feats = np.zeros((n, d))
    for i in range(n):
        p = (1.0 - topic_weight) * background + topic_weight * topics[labels[i]]
        m = max(1, rng.poisson(words_per_node))
        feats[i, rng.choice(d, size=min(m, d), replace=False, p=p)] = 1.0

    # degree-corrected edges with a fixed same-class fraction
    theta = rng.pareto(degree_exponent - 1.0, size=n) + 1.0
    by_class = [np.flatnonzero(labels == k) for k in range(c)]
    w_all = theta / theta.sum()
    edges: set = set()
    while len(edges) < CORA_EDGES:
        u = int(rng.choice(n, p=w_all))
        if rng.random() < homophily:
            pool = by_class[labels[u]]
        else:
            pool = np.flatnonzero(labels != labels[u])
        w = theta[pool] / theta[pool].sum()
        v = int(pool[rng.choice(len(pool), p=w)])
        if u != v:
            edges.add((min(u, v), max(u, v)))
    edge_arr = np.array(sorted(edges), dtype=np.int64)
    splits = random_splits(n, seed)
    return Graph(n, edge_arr, feats, labels, c, *splits,
                 info={"generator": "cora_like", "surrogate": True})
