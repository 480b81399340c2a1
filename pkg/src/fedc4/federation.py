"""Round orchestration for FedC4 and the FedAvg-style baselines, with a
float-accurate communication ledger.

Clients run condensation, embedding and local training as independent tasks;
the orchestrator does normalization, clustering, payload routing, aggregation
and evaluation serially, so the outputs do not depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .condense import CondenseConfig, CondensedGraph, condense, matching_loss_grad, original_grads
from .customizer import DEFAULT_EPSILON, ClientStats, compute_stats, normalize_stats, plan_broadcast
from .graph import Graph, induced_subgraph, normalize_adjacency
from .louvain import louvain_partition
from .nn import GCNParams, SGDConfig, accuracy, gcn_forward, init_gcn, train_gcn
from .node_selector import NodePayload, NSConfig, build_payloads, cluster_clients, swd_matrix
from .privacy import laplace_perturb
from .rebuilder import RebuildConfig, rebuild, to_graph, topology_report

logger = logging.getLogger(__name__)

MODES = ("fedc4", "fedavg", "fedavg_condensed", "fedc4_fullbroadcast")
KINDS = ("params_up", "params_down", "stats", "payload")
SERVER = "server"
_SERVER_TAG = 2 ** 31 - 1


class FederationError(RuntimeError):
    pass


@dataclass
class FederationConfig:
    num_clients: int = 5
    rounds: int = 200
    local_epochs: int = 5
    condense: CondenseConfig = field(default_factory=CondenseConfig)
    ns: NSConfig = field(default_factory=NSConfig)
    rebuild: RebuildConfig = field(default_factory=RebuildConfig)
    sgd: SGDConfig = field(default_factory=SGDConfig)
    seed: int = 0
    mode: str = "fedc4"
    hidden_dim: int = 64
    epsilon: float = DEFAULT_EPSILON
    noise_b: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.num_clients < 2:
            raise ValueError("num_clients must be at least 2")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.noise_b < 0:
            raise ValueError("noise_b must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class LedgerEntry:
    round: int
    src: str
    dst: str
    kind: str
    floats: int


@dataclass
class CommLedger:
    entries: list = field(default_factory=list)
    # sizes used by the analytic cost models (filled in by the runner)
    meta: dict = field(default_factory=dict)

    def record(self, round: int, src, dst, kind: str, floats: int) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown message kind {kind!r}")
        if floats < 0:
            raise ValueError("float count must be non-negative")
        self.entries.append(LedgerEntry(round, str(src), str(dst), kind, int(floats)))

    def totals(self) -> dict:
        out = {k: 0 for k in KINDS}
        for e in self.entries:
            out[e.kind] += e.floats
        return out

    def per_round(self, kinds: Sequence[str] = KINDS) -> dict:
        out: dict = defaultdict(int)
        for e in self.entries:
            if e.kind in kinds:
                out[e.round] += e.floats
        return dict(out)

    def message_counts(self, kind: str) -> dict:
        out: dict = defaultdict(int)
        for e in self.entries:
            if e.kind == kind:
                out[e.round] += 1
        return dict(out)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "src", "dst", "kind", "floats"])
            for e in self.entries:
                w.writerow([e.round, e.src, e.dst, e.kind, e.floats])


@dataclass
class RoundMetrics:
    round: int
    global_test_acc: float
    mean_client_test_acc: float
    mean_l_mat: float
    payload_floats_this_round: int


@dataclass(eq=False)
class ClientState:
    subgraph: Graph
    condensed: Optional[CondensedGraph] = None
    model: Optional[GCNParams] = None
    stats: Optional[ClientStats] = None
    inbox: list[NodePayload] = field(default_factory=list)
    rebuilt: Optional[Graph] = None
    # cached propagation of the original subgraph, used for evaluation
    a_hat: object = None
    ax: Optional[np.ndarray] = None


def write_metrics_csv(metrics: Sequence[RoundMetrics], path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "global_test_acc", "mean_client_test_acc", "mean_l_mat",
                    "payload_floats"])
        for m in metrics:
            w.writerow([m.round, f"{m.global_test_acc:.6f}", f"{m.mean_client_test_acc:.6f}",
                        f"{m.mean_l_mat:.6f}", m.payload_floats_this_round])


# ----------------------------------------------------------------- helpers

def stream_seed(seed: int, client: int, round: int) -> int:
    """Integer seed for the (seed, client, round) stream."""
    return int(np.random.SeedSequence([seed, client, round]).generate_state(1)[0])


def fedavg(params_list: Sequence[GCNParams], weights) -> GCNParams:
    """Weighted entrywise average of client models (weights renormalized)."""
    if not params_list:
        raise ValueError("no parameters to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(params_list):
        raise ValueError("one weight per client required")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    ref = params_list[0]
    for p in params_list[1:]:
        if p.w1.shape != ref.w1.shape or p.w2.shape != ref.w2.shape:
            raise ValueError("parameter shape mismatch across clients")
    w1 = sum(wi * p.w1 for wi, p in zip(w, params_list))
    w2 = sum(wi * p.w2 for wi, p in zip(w, params_list))
    return GCNParams(np.asarray(w1, dtype=np.float64), np.asarray(w2, dtype=np.float64))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _check_finite(params: GCNParams, round: int, client: int) -> None:
    if not (np.all(np.isfinite(params.w1)) and np.all(np.isfinite(params.w2))):
        raise FederationError(f"non-finite model after local training (round {round}, "
                              f"client {client})")


def _evaluate(states: Sequence[ClientState], params: GCNParams) -> tuple[float, float]:
    correct = 0
    total = 0
    per_client = []
    for st in states:
        g = st.subgraph
        if g.test_mask is None or not g.test_mask.any():
            continue
        logits = gcn_forward(st.a_hat, g.features, params, ax=st.ax).logits
        acc = accuracy(logits, g.labels, g.test_mask)
        n = int(g.test_mask.sum())
        correct += acc * n
        total += n
        per_client.append(acc)
    if total == 0:
        return float("nan"), float("nan")
    return float(correct / total), float(np.mean(per_client))


def _l_mat(st: ClientState, params: GCNParams) -> float:
    s = st.condensed
    g = st.subgraph
    go = original_grads(params, st.a_hat, st.ax, g.features, g.labels, g.train_mask)
    return matching_loss_grad(params, go, s.x_syn, s.a_syn, s.y_syn, need_grad=False)[0]


def _union_graph(st: ClientState, h_local: np.ndarray, cfg: FederationConfig) -> Graph:
    """Self-expressive rebuild over own synthetic nodes plus the inbox rows."""
    s = st.condensed
    xs = [s.x_syn] + [p.features for p in st.inbox]
    ys = [s.y_syn] + [p.labels for p in st.inbox]
    hs = [h_local] + [p.embeddings for p in st.inbox]
    x_u = np.vstack(xs)
    y_u = np.concatenate(ys).astype(np.int64)
    h_u = np.vstack(hs)
    if x_u.shape[0] < 2:
        return Graph(x_u.shape[0], np.zeros((0, 2), dtype=np.int64), x_u, y_u, s.num_classes,
                     train_mask=np.ones(x_u.shape[0], dtype=bool))
    z = rebuild(x_u, h_u, cfg.rebuild).z
    return to_graph(z, x_u, y_u, s.num_classes, cfg.rebuild)


# ------------------------------------------------------------------ setup

def setup_clients(g: Graph, cfg: FederationConfig, condensed: bool) -> list[ClientState]:
    if not g.has_splits:
        raise FederationError("graph has no train/val/test splits")
    part = louvain_partition(g, cfg.num_clients, cfg.seed)
    states = []
    for c in range(cfg.num_clients):
        sub = induced_subgraph(g, part.members(c))
        a_hat = normalize_adjacency(sub)
        states.append(ClientState(sub, a_hat=a_hat, ax=np.asarray(a_hat @ sub.features)))

    if condensed:
        def work(c):
            s = condense(states[c].subgraph, cfg.condense, stream_seed(cfg.seed, c, 0))
            if cfg.noise_b > 0:
                s = laplace_perturb(s, cfg.noise_b, stream_seed(cfg.seed, c, 1))
            return s

        for c, s in enumerate(_map(work, range(cfg.num_clients), cfg.workers)):
            states[c].condensed = s
    return states


def _init_global(g: Graph, cfg: FederationConfig) -> GCNParams:
    rng = np.random.default_rng(stream_seed(cfg.seed, _SERVER_TAG, 0))
    return init_gcn(g.feature_dim, cfg.hidden_dim, g.num_classes, rng)


def _record_ledger_meta(ledger: CommLedger, g: Graph, states, params: GCNParams) -> None:
    k = len(states)
    syn = [st.condensed.num_nodes for st in states if st.condensed is not None]
    ledger.meta.update(
        num_clients=k,
        nodes_per_client=g.num_nodes / k,
        syn_per_client=float(np.mean(syn)) if syn else 0.0,
        feature_dim=g.feature_dim,
        model_floats=params.num_floats,
    )


# ----------------------------------------------------------------- runners

def run_fedc4(g: Graph, cfg: FederationConfig,
              clients_out: Optional[list] = None
              ) -> tuple[list[RoundMetrics], CommLedger, GCNParams]:
    """FedC4 rounds. ``clients_out``, when given, receives the final client states."""
    if cfg.mode not in ("fedc4", "fedc4_fullbroadcast"):
        raise ValueError(f"run_fedc4 does not handle mode {cfg.mode!r}")
    full = cfg.mode == "fedc4_fullbroadcast"
    k = cfg.num_clients
    states = setup_clients(g, cfg, condensed=True)
    weights = [st.subgraph.num_nodes for st in states]
    params = _init_global(g, cfg)
    ledger = CommLedger()
    _record_ledger_meta(ledger, g, states, params)
    p = params.num_floats
    metrics: list[RoundMetrics] = []
    clusters: Optional[dict] = None

    for t in range(1, cfg.rounds + 1):
        for c in range(k):
            ledger.record(t, SERVER, c, "params_down", p)
        l_mat = float(np.mean([_l_mat(st, params) for st in states]))

        # (iii) synthetic-node embeddings under the current global model
        def embed(c):
            s = states[c].condensed
            return gcn_forward(s.a_hat(), s.x_syn, params).h1

        hs = _map(embed, range(k), cfg.workers)
        raw = [compute_stats(h) for h in hs]
        for c in range(k):
            states[c].stats = raw[c]

        # (iv) normalize and route statistics
        normed, _ = normalize_stats(raw, cfg.epsilon)
        plan = plan_broadcast(1 if full else t, k, clusters)
        received = {c: {c} for c in range(k)}
        for src in range(k):
            for dst in sorted(plan.targets[src]):
                ledger.record(t, src, dst, "stats", normed[src].num_floats)
                received[dst].add(src)

        # (v) clustering on what each client received, then node payloads
        new_clusters = cluster_clients(normed, cfg.ns, dist=swd_matrix(normed))
        clusters = {c: frozenset(new_clusters[c] & received[c]) for c in range(k)}
        for st in states:
            st.inbox = []
        payload_floats = 0
        for c in range(k):
            s = states[c].condensed
            for pl in build_payloads(c, clusters, normed, s.x_syn, s.y_syn, hs[c], cfg.ns,
                                     raw_stats=raw):
                if pl.num_rows == 0:
                    continue
                ledger.record(t, c, pl.target, "payload", pl.num_floats)
                payload_floats += pl.num_floats
                states[pl.target].inbox.append(pl)

        # (vi) rebuild and local training
        def local(c):
            st = states[c]
            rebuilt = _union_graph(st, hs[c], cfg)
            a_hat = normalize_adjacency(rebuilt)
            model = train_gcn(a_hat, rebuilt.features, rebuilt.labels, None, params.copy(),
                              cfg.local_epochs, cfg.sgd)
            return rebuilt, model

        for c, (rebuilt, model) in enumerate(_map(local, range(k), cfg.workers)):
            _check_finite(model, t, c)
            states[c].rebuilt = rebuilt
            states[c].model = model
            ledger.record(t, c, SERVER, "params_up", p)

        # (vii) aggregation and (viii) evaluation
        params = fedavg([st.model for st in states], weights)
        acc, mean_acc = _evaluate(states, params)
        metrics.append(RoundMetrics(t, acc, mean_acc, l_mat, payload_floats))
        logger.info("round %d acc %.4f payload %d", t, acc, payload_floats)

    if clients_out is not None:
        clients_out.extend(states)
    return metrics, ledger, params


def run_baseline(g: Graph, cfg: FederationConfig,
                 clients_out: Optional[list] = None
                 ) -> tuple[list[RoundMetrics], CommLedger, GCNParams]:
    if cfg.mode == "fedc4_fullbroadcast":
        return run_fedc4(g, cfg, clients_out)
    if cfg.mode not in ("fedavg", "fedavg_condensed"):
        raise ValueError(f"run_baseline does not handle mode {cfg.mode!r}")
    use_cond = cfg.mode == "fedavg_condensed"
    k = cfg.num_clients
    states = setup_clients(g, cfg, condensed=use_cond)
    weights = [st.subgraph.num_nodes for st in states]
    params = _init_global(g, cfg)
    ledger = CommLedger()
    _record_ledger_meta(ledger, g, states, params)
    p = params.num_floats
    metrics: list[RoundMetrics] = []
    cond_a_hat = [st.condensed.a_hat() for st in states] if use_cond else None

    for t in range(1, cfg.rounds + 1):
        for c in range(k):
            ledger.record(t, SERVER, c, "params_down", p)
        l_mat = (float(np.mean([_l_mat(st, params) for st in states])) if use_cond
                 else float("nan"))

        def local(c):
            st = states[c]
            if use_cond:
                s = st.condensed
                return train_gcn(cond_a_hat[c], s.x_syn, s.y_syn, None, params.copy(),
                                 cfg.local_epochs, cfg.sgd)
            sub = st.subgraph
            return train_gcn(st.a_hat, sub.features, sub.labels, sub.train_mask, params.copy(),
                             cfg.local_epochs, cfg.sgd)

        for c, model in enumerate(_map(local, range(k), cfg.workers)):
            _check_finite(model, t, c)
            states[c].model = model
            ledger.record(t, c, SERVER, "params_up", p)
        params = fedavg([st.model for st in states], weights)
        acc, mean_acc = _evaluate(states, params)
        metrics.append(RoundMetrics(t, acc, mean_acc, l_mat, 0))
        logger.info("round %d acc %.4f", t, acc)

    if clients_out is not None:
        clients_out.extend(states)
    return metrics, ledger, params


def run(g: Graph, cfg: FederationConfig, clients_out: Optional[list] = None):
    if cfg.mode in ("fedc4", "fedc4_fullbroadcast"):
        return run_fedc4(g, cfg, clients_out)
    return run_baseline(g, cfg, clients_out)


def client_topology(st: ClientState):
    """Original / condensed / rebuilt topology triplet for one client."""
    if st.condensed is None or st.rebuilt is None:
        raise FederationError("client has no condensed or rebuilt graph")
    return topology_report(st.subgraph, st.condensed.to_graph(), st.rebuilt)


# ------------------------------------------------------------------ ledger

def ledger_summary(ledger: CommLedger, cfg: Optional[FederationConfig] = None) -> dict:
    """Measured totals per kind and round next to the three analytic cost models:
    server-client 2*C*p, client-client C^2*N*d and FedC4 C*log2(C)*N'*d."""
    if not ledger.entries:
        raise ValueError("empty ledger")
    meta = ledger.meta
    c = meta.get("num_clients", cfg.num_clients if cfg is not None else 0)
    n = meta.get("nodes_per_client", 0.0)
    n_syn = meta.get("syn_per_client", 0.0)
    d = meta.get("feature_dim", 0)
    p = meta.get("model_floats", 0)
    totals = ledger.totals()
    rounds = sorted({e.round for e in ledger.entries})
    per_round = {r: {k: 0 for k in KINDS} for r in rounds}
    for e in ledger.entries:
        per_round[e.round][e.kind] += e.floats
    return {
        "totals": totals,
        "per_round": per_round,
        "analytic": {
            "s_c": 2.0 * c * p,
            "c_c": float(c) ** 2 * n * d,
            "fedc4": c * math.log2(c) * n_syn * d if c > 0 else 0.0,
        },
        "sizes": {"C": c, "N": n, "N_prime": n_syn, "d": d, "p": p},
    }
