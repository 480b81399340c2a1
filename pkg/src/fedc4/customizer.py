"""Client embedding statistics, global normalization and broadcast planning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DEFAULT_EPSILON = 1e-8


@dataclass
class ClientStats:
    dis: np.ndarray      # embedding norms, one per synthetic node
    mu: np.ndarray       # prototype (mean) embedding
    node_count: int

    @property
    def num_floats(self) -> int:
        return len(self.dis) + len(self.mu)


@dataclass
class GlobalStats:
    mu_global: np.ndarray
    sigma_global: float
    mu_dis: float
    sigma_dis: float
    epsilon: float


@dataclass
class BroadcastPlan:
    round: int
    targets: dict[int, frozenset]

    @property
    def num_messages(self) -> int:
        return sum(len(t) for t in self.targets.values())


def compute_stats(h: np.ndarray) -> ClientStats:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError("embedding matrix is empty")
    return ClientStats(np.linalg.norm(h, axis=1), h.mean(axis=0), h.shape[0])


def normalize_stats(all_stats: Sequence[ClientStats], epsilon: float = DEFAULT_EPSILON
                    ) -> tuple[list[ClientStats], GlobalStats]:
    """Center/scale prototypes by the across-client spread and z-score the norms
    against the pooled norms of every client."""
    if not all_stats:
        raise ValueError("no client statistics")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mus = np.stack([s.mu for s in all_stats])
    mu_global = mus.mean(axis=0)
    sigma_global = float(np.sqrt(np.mean(np.sum((mus - mu_global) ** 2, axis=1))))
    pooled = np.concatenate([s.dis for s in all_stats])
    mu_dis = float(pooled.mean())
    sigma_dis = float(pooled.std())
    out = [
        ClientStats((s.dis - mu_dis) / (sigma_dis + epsilon),
                    (s.mu - mu_global) / (sigma_global + epsilon), s.node_count)
        for s in all_stats
    ]
    return out, GlobalStats(mu_global, sigma_global, mu_dis, sigma_dis, epsilon)


def plan_broadcast(round: int, num_clients: int, clusters: Optional[dict[int, frozenset]] = None
                   ) -> BroadcastPlan:
    """Round 1 (or no clustering requested): everyone to everyone. Later rounds:
    each client only to the other members of its previous-round cluster."""
    if round < 1:
        raise ValueError("rounds are numbered from 1")
    if round == 1:
        everyone = frozenset(range(num_clients))
        return BroadcastPlan(round, {c: everyone - {c} for c in range(num_clients)})
    if clusters is None:
        raise ValueError("clusters from the previous round are required after round 1")
    return BroadcastPlan(
        round, {c: frozenset(clusters.get(c, frozenset({c}))) - {c} for c in range(num_clients)}
    )
