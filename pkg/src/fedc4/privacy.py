"""Empirical privacy checks: node-removal influence on condensed embeddings
and Laplace perturbation of shared synthetic features."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse.csgraph as csgraph

from .condense import CondenseConfig, CondensedGraph, condense, synthetic_class_counts
from .graph import Graph, induced_subgraph, normalize_dense, sbm_generate
from .nn import GCNParams, gcn_forward, init_gcn

logger = logging.getLogger(__name__)


@dataclass
class InfluenceRecord:
    n: int
    m: int
    j: int
    delta: float
    seed: int


def laplace_perturb(s: CondensedGraph, b: float, seed: int) -> CondensedGraph:
    """Add i.i.d. Laplace(0, b) noise to the synthetic features only."""
    if b < 0:
        raise ValueError("noise scale must be non-negative")
    out = s.copy()
    if b > 0:
        rng = np.random.default_rng(seed)
        out.x_syn = out.x_syn + rng.laplace(0.0, b, size=out.x_syn.shape)
    return out


def synthetic_embeddings(s: CondensedGraph, theta_ref: GCNParams) -> np.ndarray:
    return gcn_forward(normalize_dense(s.a_syn), s.x_syn, theta_ref).h1


def node_removal_delta(g: Graph, j: Optional[int], cfg: CondenseConfig, seed: int,
                       theta_ref: GCNParams, baseline: Optional[CondensedGraph] = None
                       ) -> Optional[float]:
    """Frobenius change of the condensed embeddings when node ``j`` is removed.

    Both condensations share the seed and the synthetic class counts of ``g``;
    ``j=None`` is the no-op control. Returns ``None`` when the removal would
    leave a class without labelled nodes.
    """
    if g.num_nodes < 3:
        raise ValueError("graph needs at least three nodes")
    counts = synthetic_class_counts(g, cfg.ratio, cfg.nodes_per_class)
    if baseline is None:
        baseline = condense(g, cfg, seed, counts=counts)
    if j is None:
        other = condense(g, cfg, seed, counts=counts)
    else:
        if not 0 <= j < g.num_nodes:
            raise ValueError("node id out of range")
        keep = np.delete(np.arange(g.num_nodes), j)
        g_minus = induced_subgraph(g, keep)
        present = np.bincount(g_minus.labels[g_minus.train_mask], minlength=g.num_classes) > 0
        if np.any((counts > 0) & ~present):
            return None
        other = condense(g_minus, cfg, seed, counts=counts)
    h0 = synthetic_embeddings(baseline, theta_ref)
    h1 = synthetic_embeddings(other, theta_ref)
    return float(np.linalg.norm(h0 - h1))


def fit_loglog_slope(sizes: Sequence[float], deltas: Sequence[float]) -> float:
    """Least-squares slope of log(delta) against log(n)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if len(sizes) < 3:
        raise ValueError("need at least three sizes")
    if np.all(deltas == 0) or np.any(deltas <= 0):
        raise ValueError("degenerate influence values")
    slope, _ = np.polyfit(np.log(sizes), np.log(deltas), 1)
    return float(slope)


def _removable_nodes(g: Graph) -> np.ndarray:
    """Train nodes whose removal does not split a connected component."""
    base = csgraph.connected_components(g.adjacency, directed=False)[0]
    out = []
    for j in np.flatnonzero(g.train_mask):
        keep = np.delete(np.arange(g.num_nodes), j)
        sub = g.adjacency[keep][:, keep]
        if csgraph.connected_components(sub, directed=False)[0] <= base:
            out.append(j)
    return np.array(out if out else np.flatnonzero(g.train_mask), dtype=np.int64)


def sbm_family(n: int, seed: int, d: int = 8) -> Graph:
    """Two-block SBM with constant expected degree, used by the scaling study."""
    half = n // 2
    return sbm_generate([half, n - half], min(1.0, 10.0 / half), min(1.0, 1.0 / half), d, 2,
                        seed)


def influence_scaling(sizes: Sequence[int], cfg: CondenseConfig, seeds: Sequence[int],
                      removals: int = 5,
                      make_graph: Callable[[int, int], Graph] = sbm_family
                      ) -> tuple[float, list[InfluenceRecord]]:
    """Mean node-removal influence per graph size and its log-log slope.
    ``cfg.nodes_per_class`` must be set so the synthetic size is fixed."""
    if cfg.nodes_per_class is None:
        raise ValueError("influence scaling needs a fixed synthetic size (nodes_per_class)")
    records: list[InfluenceRecord] = []
    means = []
    for n in sizes:
        vals = []
        for seed in seeds:
            g = make_graph(n, seed)
            theta_ref = init_gcn(g.feature_dim, cfg.hidden_dim, g.num_classes,
                                 np.random.default_rng([seed, 99]))
            counts = synthetic_class_counts(g, cfg.ratio, cfg.nodes_per_class)
            base = condense(g, cfg, seed, counts=counts)
            rng = np.random.default_rng([seed, n])
            cand = _removable_nodes(g)
            picks = rng.choice(cand, size=min(removals, len(cand)), replace=False)
            for j in picks:
                delta = node_removal_delta(g, int(j), cfg, seed, theta_ref, baseline=base)
                if delta is None:
                    logger.info("skipped removal of node %d (n=%d): class extinction", j, n)
                    continue
                vals.append(delta)
                records.append(InfluenceRecord(n, int(counts.sum()), int(j), delta, seed))
        means.append(float(np.mean(vals)))
    return fit_loglog_slope(sizes, means), records


def write_privacy_csv(records: Sequence[InfluenceRecord], path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "j", "delta"])
        for r in records:
            w.writerow([r.n, r.m, r.j, f"{r.delta:.6e}"])


def with_fixed_size(cfg: CondenseConfig, nodes_per_class: int) -> CondenseConfig:
    return replace(cfg, nodes_per_class=nodes_per_class)


def scaling_config(nodes_per_class: int = 5, outer_epochs: int = 50) -> CondenseConfig:
    """Condensation schedule for the removal study: a short, small-step run with
    no sparsification, so the paired runs stay on the same smooth branch and
    an edge flipping across the threshold does not masquerade as influence."""
    return CondenseConfig(ratio=1.0, delta_sparsify=0.0, outer_epochs=outer_epochs,
                          theta_samples=1, lr_feat=0.01, lr_adj=0.01, alt_steps_adj=1,
                          alt_steps_feat=1, nodes_per_class=nodes_per_class)
