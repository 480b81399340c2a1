"""Gradient-matching graph condensation.

A client graph is distilled into a few synthetic nodes whose GCN training
gradients match those of the real graph. The synthetic adjacency is produced
by a pairwise MLP over feature pairs and thresholded at the end.

The matching loss differentiates through the inner GCN gradient, so its
gradient w.r.t. the synthetic features and adjacency is a reverse pass over the
GCN backward pass (see ``matching_loss_grad``).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .graph import (
    Graph,
    load_dataset,
    normalize_adjacency,
    normalize_dense,
    normalize_dense_backward,
    write_dataset,
)
from .nn import (
    Adam,
    GCNParams,
    MLPParams,
    SGDConfig,
    gcn_backward,
    gcn_forward,
    init_gcn,
    init_mlp,
    mlp_backward,
    mlp_forward,
    softmax,
    train_gcn,
)

logger = logging.getLogger(__name__)


class CondensationError(RuntimeError):
    pass


@dataclass(eq=False)
class CondensedGraph:
    x_syn: np.ndarray
    a_syn: Optional[np.ndarray]
    y_syn: np.ndarray
    num_classes: int
    history: list = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return self.x_syn.shape[0]

    def a_hat(self) -> np.ndarray:
        return normalize_dense(self.a_syn)

    def to_graph(self) -> Graph:
        """Unweighted view: an edge wherever the stored weight is positive."""
        iu, ju = np.triu_indices(self.num_nodes, k=1)
        keep = self.a_syn[iu, ju] > 0
        n = self.num_nodes
        return Graph(n, np.stack([iu[keep], ju[keep]], axis=1), self.x_syn, self.y_syn,
                     self.num_classes, train_mask=np.ones(n, dtype=bool))

    def copy(self) -> "CondensedGraph":
        return CondensedGraph(self.x_syn.copy(), None if self.a_syn is None else self.a_syn.copy(),
                              self.y_syn.copy(), self.num_classes, list(self.history))


@dataclass
class CondenseConfig:
    ratio: float = 0.04
    delta_sparsify: float = 0.5
    outer_epochs: int = 100
    theta_samples: int = 4
    lr_feat: float = 0.1
    lr_adj: float = 0.01
    alt_steps_adj: int = 1
    alt_steps_feat: int = 5
    hidden_dim: int = 64
    mlp_hidden: int = 32
    # fixes the synthetic size independently of the graph (privacy experiments)
    nodes_per_class: Optional[int] = None
    # "full": one full-batch gradient term; "per_class": one term per class
    match: str = "full"

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError("ratio must lie in (0, 1]")
        if not 0.0 <= self.delta_sparsify < 1.0:
            raise ValueError("delta_sparsify must lie in [0, 1)")
        if self.match not in ("full", "per_class"):
            raise ValueError("match must be 'full' or 'per_class'")


# ---------------------------------------------------------------- init

def synthetic_class_counts(g: Graph, ratio: float, nodes_per_class: Optional[int] = None
                           ) -> np.ndarray:
    """Per-class synthetic counts: max(1, round(ratio * count)) for every class
    present among the labelled (train) nodes."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    labelled = g.labels if g.train_mask is None else g.labels[g.train_mask]
    counts = np.bincount(labelled, minlength=g.num_classes)
    if nodes_per_class is not None:
        return np.where(counts > 0, nodes_per_class, 0)
    return np.where(counts > 0, np.maximum(1, np.round(ratio * counts)), 0).astype(np.int64)


def _streams(seed: int):
    return [np.random.default_rng([seed, k]) for k in range(3)]


def init_condensed(g: Graph, ratio: float, seed: int, mlp_hidden: int = 32,
                   nodes_per_class: Optional[int] = None, counts: Optional[np.ndarray] = None
                   ) -> tuple[CondensedGraph, MLPParams]:
    if counts is None:
        counts = synthetic_class_counts(g, ratio, nodes_per_class)
    y = np.repeat(np.arange(g.num_classes), counts)
    rng_x, rng_phi, _ = _streams(seed)
    x = rng_x.standard_normal((len(y), g.feature_dim))
    phi = init_mlp([2 * g.feature_dim, mlp_hidden, 1], rng_phi)
    return CondensedGraph(x, None, y, g.num_classes), phi


# ----------------------------------------------------- adjacency synthesizer

@dataclass
class _AdjTrace:
    pre1: np.ndarray
    rest: object
    a: np.ndarray


def _rest(phi: MLPParams) -> MLPParams:
    return MLPParams(phi.weights[1:], phi.biases[1:])


def _synth(x: np.ndarray, phi: MLPParams) -> tuple[np.ndarray, _AdjTrace]:
    n, d = x.shape
    w = phi.weights[0]
    pre1 = (x @ w[:d])[:, None, :] + (x @ w[d:])[None, :, :] + phi.biases[0]
    h = np.maximum(pre1, 0.0).reshape(n * n, -1)
    out, rest = mlp_forward(_rest(phi), h)
    o = out.reshape(n, n)
    a = expit(0.5 * (o + o.T))
    np.fill_diagonal(a, 0.0)
    return a, _AdjTrace(pre1, rest, a)


def synth_adjacency(x_syn: np.ndarray, phi: MLPParams) -> np.ndarray:
    """A_ij = sigmoid((mlp([x_i; x_j]) + mlp([x_j; x_i])) / 2), zero diagonal."""
    return _synth(x_syn, phi)[0]


def _synth_backward(x, phi: MLPParams, tr: _AdjTrace, g_a: np.ndarray
                    ) -> tuple[MLPParams, np.ndarray]:
    n, d = x.shape
    a = tr.a
    g_t = g_a * a * (1.0 - a)
    np.fill_diagonal(g_t, 0.0)
    g_o = 0.5 * (g_t + g_t.T)
    g_rest, g_h = mlp_backward(_rest(phi), tr.rest, g_o.reshape(n * n, 1))
    g_pre1 = g_h.reshape(n, n, -1) * (tr.pre1 > 0)
    r = g_pre1.sum(axis=1)
    c = g_pre1.sum(axis=0)
    w = phi.weights[0]
    g_w1 = np.vstack([x.T @ r, x.T @ c])
    g_b1 = r.sum(axis=0)
    g_x = r @ w[:d].T + c @ w[d:].T
    return MLPParams([g_w1, *g_rest.weights], [g_b1, *g_rest.biases]), g_x


def sparsify(a: np.ndarray, delta: float) -> np.ndarray:
    """Keep entries strictly above ``delta``."""
    return np.where(a > delta, a, 0.0)


# ------------------------------------------------------------ matching loss

def original_grads(theta: GCNParams, a_hat, ax: np.ndarray, x: np.ndarray, labels, mask
                   ) -> tuple[np.ndarray, np.ndarray]:
    tr = gcn_forward(a_hat, x, theta, ax=ax)
    gr = gcn_backward(a_hat, x, theta, labels, mask, tr)
    return gr.w1, gr.w2


def matching_loss_grad(theta: GCNParams, g_orig: tuple[np.ndarray, np.ndarray],
                       x: np.ndarray, a: np.ndarray, y: np.ndarray, need_grad: bool = True,
                       rows: Optional[np.ndarray] = None):
    """Squared distance between real and synthetic GCN weight gradients.

    Returns ``(loss, d loss / d x, d loss / d a)`` where ``a`` is the raw
    synthetic adjacency (before self-loop normalization). The synthetic loss
    averages over every synthetic node, or over the rows flagged in ``rows``.
    """
    if x.shape[1] != theta.w1.shape[0]:
        raise ValueError("theta does not match the synthetic feature dimension")
    w1, w2 = theta.w1, theta.w2
    a_hat = normalize_dense(a)
    tr = gcn_forward(a_hat, x, theta)
    n = x.shape[0]
    if rows is None:
        wt = 1.0 / n
    else:
        rows = np.asarray(rows, dtype=bool)
        wt = (rows / max(int(rows.sum()), 1))[:, None]
    p = softmax(tr.logits)
    g_z = p.copy()
    g_z[np.arange(n), y] -= 1.0
    g_z *= wt
    g_w2 = tr.ah.T @ g_z
    g_q = g_z @ w2.T
    g_h = a_hat.T @ g_q
    mask = tr.pre > 0
    g_u = g_h * mask
    g_w1 = tr.ax.T @ g_u

    d1 = g_orig[0] - g_w1
    d2 = g_orig[1] - g_w2
    loss = float(np.sum(d1 * d1) + np.sum(d2 * d2))
    if not need_grad:
        return loss, None, None

    # reverse pass over the backward computation, cotangents v = dL/dg_syn
    v1, v2 = -2.0 * d1, -2.0 * d2
    bar_gz = tr.ah @ v2
    bar_q = g_z @ v2.T
    bar_gu = tr.ax @ v1
    bar_p_ax = g_u @ v1.T
    bar_gh = bar_gu * mask
    bar_ahat = g_q @ bar_gh.T
    bar_gq = a_hat @ bar_gh
    bar_gz = bar_gz + bar_gq @ w2
    bar_p = bar_gz * wt
    bar_logits = p * (bar_p - np.sum(bar_p * p, axis=1, keepdims=True))
    bar_q = bar_q + bar_logits @ w2.T
    bar_ahat += bar_q @ tr.h1.T
    bar_h = a_hat.T @ bar_q
    bar_u = bar_h * mask
    bar_p_ax = bar_p_ax + bar_u @ w1.T
    bar_ahat += bar_p_ax @ x.T
    bar_x = a_hat.T @ bar_p_ax
    bar_a = normalize_dense_backward(a, bar_ahat)
    return loss, bar_x, bar_a


def gradient_matching_loss(theta: GCNParams, g: Graph, s: CondensedGraph) -> float:
    """Matching loss of a condensed graph with explicit adjacency against ``g``
    (real-graph loss on the train mask)."""
    if s.a_syn is None:
        raise ValueError("condensed adjacency is undefined")
    if g.feature_dim != theta.w1.shape[0] or s.x_syn.shape[1] != theta.w1.shape[0]:
        raise ValueError("feature dimension does not match theta")
    a_hat = normalize_adjacency(g)
    ax = np.asarray(a_hat @ g.features)
    gg = original_grads(theta, a_hat, ax, g.features, g.labels, g.train_mask)
    return matching_loss_grad(theta, gg, s.x_syn, s.a_syn, s.y_syn, need_grad=False)[0]


def matching_targets(theta: GCNParams, a_hat, ax, g: Graph, y_syn: np.ndarray, mode: str):
    """Real-graph gradients to match, as ``[(grads, synthetic rows or None)]``.

    ``full`` is one full-batch term; ``per_class`` has one term per class
    present on both sides, each synthetic term averaging over its class rows.
    """
    if mode == "full":
        return [(original_grads(theta, a_hat, ax, g.features, g.labels, g.train_mask), None)]
    out = []
    for c in range(g.num_classes):
        real = g.train_mask & (g.labels == c)
        rows = y_syn == c
        if real.any() and rows.any():
            out.append((original_grads(theta, a_hat, ax, g.features, g.labels, real), rows))
    return out


def matching_objective(thetas, g_origs, x, phi: MLPParams, y):
    """Mean matching loss over ``thetas`` with the adjacency generated from
    ``(x, phi)``; returns ``(loss, d/dx, d/dphi)``.

    Each entry of ``g_origs`` is either a pair of real gradients (full batch)
    or a list of ``(grads, rows)`` terms from ``matching_targets``.
    """
    a, atr = _synth(x, phi)
    total = 0.0
    gx = np.zeros_like(x)
    ga = np.zeros_like(a)
    for theta, go in zip(thetas, g_origs):
        terms = [(go, None)] if isinstance(go, tuple) else go
        for target, rows in terms:
            loss, gxi, gai = matching_loss_grad(theta, target, x, a, y, rows=rows)
            total += loss
            gx += gxi
            ga += gai
    k = len(thetas)
    g_phi, gx_adj = _synth_backward(x, phi, atr, ga / k)
    return total / k, gx / k + gx_adj, g_phi


# ----------------------------------------------------------------- driver

def condense(g: Graph, cfg: CondenseConfig, seed: int, counts: Optional[np.ndarray] = None
             ) -> CondensedGraph:
    """Alternate MLP and feature updates against freshly sampled GCN weights.

    ``counts`` overrides the per-class synthetic sizes (paired experiments).
    """
    if g.train_mask is None or not g.train_mask.any():
        raise CondensationError("graph needs a non-empty train mask")
    s, phi = init_condensed(g, cfg.ratio, seed, cfg.mlp_hidden, cfg.nodes_per_class, counts)
    _, _, rng_theta = _streams(seed)
    x = s.x_syn
    a_hat = normalize_adjacency(g)
    ax = np.asarray(a_hat @ g.features)
    opt_x = Adam(cfg.lr_feat)
    opt_phi = Adam(cfg.lr_adj)
    history = []
    for epoch in range(cfg.outer_epochs):
        thetas = [init_gcn(g.feature_dim, cfg.hidden_dim, g.num_classes, rng_theta)
                  for _ in range(cfg.theta_samples)]
        g_origs = [matching_targets(t, a_hat, ax, g, s.y_syn, cfg.match) for t in thetas]
        losses = []
        for _ in range(cfg.alt_steps_adj):
            loss, _, g_phi = matching_objective(thetas, g_origs, x, phi, s.y_syn)
            losses.append(loss)
            opt_phi.step(phi.arrays(), g_phi.arrays())
        for _ in range(cfg.alt_steps_feat):
            loss, g_x, _ = matching_objective(thetas, g_origs, x, phi, s.y_syn)
            losses.append(loss)
            opt_x.step([x], [g_x])
        mean = float(np.mean(losses)) if losses else 0.0
        if not np.isfinite(mean):
            raise CondensationError(f"non-finite matching loss at epoch {epoch}")
        history.append(mean)
    s.a_syn = sparsify(synth_adjacency(x, phi), cfg.delta_sparsify)
    s.history = history
    logger.debug("condensed %d -> %d nodes, loss %.4g -> %.4g", g.num_nodes, s.num_nodes,
                 history[0] if history else float("nan"),
                 history[-1] if history else float("nan"))
    return s


def train_on_condensed(s: CondensedGraph, epochs: int, cfg: SGDConfig, seed: int,
                       hidden_dim: int = 64) -> GCNParams:
    rng = np.random.default_rng(seed)
    params = init_gcn(s.x_syn.shape[1], hidden_dim, s.num_classes, rng)
    if epochs == 0:
        return params
    return train_gcn(s.a_hat(), s.x_syn, s.y_syn, None, params, epochs, cfg)


def condensed_test_accuracy(g: Graph, s: CondensedGraph, seed: int, epochs: int = 200,
                            cfg: Optional[SGDConfig] = None, hidden_dim: int = 64) -> float:
    """Train on ``s`` only, then score on the test nodes of ``g``."""
    params = train_on_condensed(s, epochs, cfg or SGDConfig(), seed, hidden_dim)
    logits = gcn_forward(normalize_adjacency(g), g.features, params).logits
    pred = logits.argmax(axis=1)
    return float(np.mean(pred[g.test_mask] == g.labels[g.test_mask]))


# ---------------------------------------------------------------- storage

def write_condensed(s: CondensedGraph, path: str) -> None:
    write_dataset(s.to_graph(), path)
    np.savetxt(os.path.join(path, "a_syn.csv"), s.a_syn, delimiter=",", fmt="%.17g")


def read_condensed(path: str) -> CondensedGraph:
    g = load_dataset(path)
    a = np.loadtxt(os.path.join(path, "a_syn.csv"), delimiter=",", ndmin=2)
    return CondensedGraph(g.features, a, g.labels, g.num_classes)
