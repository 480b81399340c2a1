"""Louvain community detection forced to an exact number of parts."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .graph import Graph, GraphError


@dataclass
class Partition:
    assignment: np.ndarray
    num_clients: int

    def members(self, client: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_clients)


def modularity(adj: sp.spmatrix, assignment: np.ndarray) -> float:
    adj = sp.csr_matrix(adj)
    m2 = adj.sum()
    if m2 == 0:
        return 0.0
    k = np.asarray(adj.sum(axis=1)).ravel()
    coo = adj.tocoo()
    same = assignment[coo.row] == assignment[coo.col]
    inside = coo.data[same].sum()
    tot = np.bincount(assignment, weights=k)
    return float(inside / m2 - np.sum((tot / m2) ** 2))


def _renumber(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.astype(np.int64)


def louvain(adj: sp.spmatrix, seed: int) -> np.ndarray:
    """Two-phase Louvain (local moving + aggregation) until no level improves."""
    adj = sp.csr_matrix(adj, dtype=np.float64)
    n = adj.shape[0]
    rng = np.random.default_rng(seed)
    assignment = np.arange(n, dtype=np.int64)
    m2 = float(adj.sum())
    if m2 == 0:
        return assignment
    level = adj
    while True:
        size = level.shape[0]
        comm = np.arange(size, dtype=np.int64)
        node_weight = np.asarray(level.sum(axis=1)).ravel()
        order = rng.permutation(size).astype(np.int64)
        level.sort_indices()
        moves = kernels.local_move(
            level.indptr.astype(np.int64), level.indices.astype(np.int64),
            level.data.astype(np.float64), node_weight, order, comm, m2,
        )
        comm = _renumber(comm)
        assignment = comm[assignment]
        if moves == 0 or comm.max() + 1 == size:
            break
        member = sp.csr_matrix(
            (np.ones(size), (np.arange(size), comm)), shape=(size, comm.max() + 1)
        )
        level = (member.T @ level @ member).tocsr()
    return assignment


def _merge_gain(adj: sp.csr_matrix, assignment: np.ndarray, m2: float):
    """Modularity change for merging every pair of communities."""
    c = assignment.max() + 1
    member = sp.csr_matrix(
        (np.ones(len(assignment)), (np.arange(len(assignment)), assignment)),
        shape=(len(assignment), c),
    )
    between = (member.T @ adj @ member).toarray()
    tot = np.asarray(between.sum(axis=1)).ravel()
    if m2 == 0:
        return np.zeros((c, c))
    return 2.0 * (between / m2 - np.outer(tot, tot) / m2 ** 2)


def _merge_to(adj, assignment, k):
    m2 = float(adj.sum())
    while assignment.max() + 1 > k:
        gain = _merge_gain(adj, assignment, m2)
        sizes = np.bincount(assignment)
        c = len(sizes)
        iu, ju = np.triu_indices(c, k=1)
        g = gain[iu, ju]
        best = g.max()
        cand = np.flatnonzero(g >= best - 1e-12)
        # least modularity loss first, then the smallest merged size
        pick = cand[np.argmin(sizes[iu[cand]] + sizes[ju[cand]])]
        a, b = iu[pick], ju[pick]
        assignment = np.where(assignment == b, a, assignment)
        assignment = _renumber(assignment)
    return assignment


def _split_to(adj, assignment, k, rng):
    adj = sp.csr_matrix(adj)
    while assignment.max() + 1 < k:
        sizes = np.bincount(assignment)
        big = int(np.argmax(sizes))
        nodes = np.flatnonzero(assignment == big)
        if len(nodes) < 2:
            raise GraphError("cannot split further")
        node_set = set(nodes.tolist())
        start = int(rng.choice(nodes))
        # BFS inside the community from a seeded start; unreached nodes are
        # appended in seeded order so disconnected communities still split.
        seen = {start}
        order = []
        rest = deque(rng.permutation(nodes).tolist())
        queue = deque([start])
        while len(order) < len(nodes):
            if not queue:
                while rest[0] in seen:
                    rest.popleft()
                nxt = rest.popleft()
                seen.add(nxt)
                queue.append(nxt)
            u = queue.popleft()
            order.append(u)
            for v in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
                v = int(v)
                if v in node_set and v not in seen:
                    seen.add(v)
                    queue.append(v)
        half = order[: len(order) // 2]
        assignment = assignment.copy()
        assignment[half] = assignment.max() + 1
    return assignment


def louvain_partition(g: Graph, k: int, seed: int) -> Partition:
    """Louvain communities, greedily merged (least modularity loss) or split
    (seeded balanced BFS cut of the largest part) until exactly ``k`` remain."""
    if g.num_nodes == 0:
        raise GraphError("empty graph")
    if not 1 <= k <= g.num_nodes:
        raise GraphError(f"k must be in [1, {g.num_nodes}]")
    adj = g.adjacency
    assignment = louvain(adj, seed)
    if assignment.max() + 1 > k:
        assignment = _merge_to(adj, assignment, k)
    elif assignment.max() + 1 < k:
        assignment = _split_to(adj, assignment, k, np.random.default_rng(seed + 7919))
    return Partition(assignment.astype(np.int64), k)
