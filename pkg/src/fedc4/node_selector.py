"""Client clustering by 1-D Wasserstein distance of norm distributions and
per-target node selection by prototype cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .customizer import ClientStats


@dataclass
class NSConfig:
    tau: float = 0.38
    delta_cluster: Union[float, str] = "median"

    def __post_init__(self):
        if not -1.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [-1, 1)")


@dataclass
class NodePayload:
    source: int
    target: int
    index: np.ndarray          # synthetic-node rows on the source client
    features: np.ndarray
    labels: np.ndarray
    embeddings: np.ndarray

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("payload source and target coincide")

    @property
    def num_rows(self) -> int:
        return len(self.index)

    @property
    def num_floats(self) -> int:
        return self.num_rows * (self.features.shape[1] + 1 + self.embeddings.shape[1])


def swd(dis_a, dis_b) -> float:
    """Exact Wasserstein-1 distance between two 1-D empirical distributions."""
    a = np.sort(np.asarray(dis_a, dtype=np.float64))
    b = np.sort(np.asarray(dis_b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    if len(a) == len(b):
        return float(np.mean(np.abs(a - b)))
    return float(kernels.sorted_w1(np.ascontiguousarray(a), np.ascontiguousarray(b)))


def swd_matrix(stats: Sequence[ClientStats]) -> np.ndarray:
    k = len(stats)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = swd(stats[i].dis, stats[j].dis)
    return out


def resolve_delta(dist: np.ndarray, delta: Union[float, str]) -> float:
    if delta == "median":
        off = dist[~np.eye(len(dist), dtype=bool)]
        return float(np.median(off)) if off.size else 0.0
    return float(delta)


def cluster_clients(stats: Sequence[ClientStats], cfg: NSConfig,
                    dist: Optional[np.ndarray] = None) -> dict[int, frozenset]:
    """Per-client neighbourhoods {c} | {c' : SWD(c, c') <= delta}."""
    if len(stats) < 2:
        raise ValueError("need at least two clients")
    if dist is None:
        dist = swd_matrix(stats)
    delta = resolve_delta(dist, cfg.delta_cluster)
    return {
        c: frozenset({c} | {o for o in range(len(stats)) if dist[c, o] <= delta})
        for c in range(len(stats))
    }


def cosine_to(h: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Cosine of each row with ``mu``; zero-norm rows get NaN."""
    norms = np.linalg.norm(h, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (h @ mu) / (norms * np.linalg.norm(mu))


def select_nodes_for_target(h_src: np.ndarray, mu_target: np.ndarray, tau: float) -> np.ndarray:
    if not np.any(mu_target):
        raise ValueError("zero prototype vector")
    sim = cosine_to(h_src, mu_target)
    return np.flatnonzero(np.nan_to_num(sim, nan=-np.inf) > tau)


def build_payloads(client: int, cluster: dict[int, frozenset], stats: Sequence[ClientStats],
                   x_syn: np.ndarray, y_syn: np.ndarray, h: np.ndarray, cfg: NSConfig,
                   raw_stats: Optional[Sequence[ClientStats]] = None) -> list[NodePayload]:
    """Independent node selection for every other member of ``client``'s cluster.

    ``stats`` are the normalized statistics; a target whose normalized prototype
    is the zero vector falls back to its raw prototype from ``raw_stats``.
    """
    out = []
    for target in sorted(cluster[client] - {client}):
        mu = stats[target].mu
        if not np.any(mu):
            if raw_stats is None or not np.any(raw_stats[target].mu):
                continue
            mu = raw_stats[target].mu
        idx = select_nodes_for_target(h, mu, cfg.tau)
        out.append(NodePayload(client, target, idx, x_syn[idx], y_syn[idx], h[idx]))
    return out
