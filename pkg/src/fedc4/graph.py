"""Graph container, dataset I/O, synthetic generators and topology metrics."""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class GraphError(ValueError):
    pass


def _canonical_edges(pairs: np.ndarray, num_nodes: int) -> tuple[np.ndarray, int, int]:
    """Return unique (u<v) edges plus counts of self loops and duplicates dropped."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise GraphError("edge endpoint out of range")
    loops = pairs[:, 0] == pairs[:, 1]
    n_loops = int(loops.sum())
    pairs = np.sort(pairs[~loops], axis=1)
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64), n_loops, 0
    uniq = np.unique(pairs, axis=0)
    return uniq, n_loops, len(pairs) - len(uniq)


@dataclass(eq=False)
class Graph:
    """Undirected simple graph with node features, labels and optional splits.

    ``edges`` holds each undirected edge once as a row ``(u, v)`` with ``u < v``.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: Optional[np.ndarray] = None
    val_mask: Optional[np.ndarray] = None
    test_mask: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges, loops, dups = _canonical_edges(self.edges, self.num_nodes)
        if loops or dups:
            self.info.setdefault("dropped_self_loops", loops)
            self.info.setdefault("dropped_duplicates", dups)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise GraphError(
                f"feature matrix has {self.features.shape[0]} rows, expected {self.num_nodes}"
            )
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) != self.num_nodes:
            raise GraphError(f"{len(self.labels)} labels for {self.num_nodes} nodes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise GraphError(f"label out of range [0, {self.num_classes})")
        masks = []
        for name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=bool).reshape(-1)
                if len(m) != self.num_nodes:
                    raise GraphError(f"{name} has wrong length")
                setattr(self, name, m)
                masks.append(m)
        for i in range(len(masks)):
            for j in range(i + 1, len(masks)):
                if np.any(masks[i] & masks[j]):
                    raise GraphError("split masks overlap")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_splits(self) -> bool:
        return self.train_mask is not None and self.test_mask is not None

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        a = sp.coo_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))
        return a.tocsr()

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def with_splits(self, train, val, test) -> "Graph":
        return Graph(
            self.num_nodes, self.edges, self.features, self.labels, self.num_classes,
            train, val, test, dict(self.info),
        )


def random_splits(n: int, seed: int, fractions=(0.6, 0.2, 0.2)):
    """Seeded random train/val/test masks."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][perm[:n_train]] = True
    masks[1][perm[n_train:n_train + n_val]] = True
    masks[2][perm[n_train + n_val:]] = True
    return masks


# ---------------------------------------------------------------- dataset I/O

def load_dataset(path: str | os.PathLike) -> Graph:
    """Read a dataset directory (meta.json, edges.tsv, features.csv, labels.txt,
    optional splits.json)."""
    path = os.fspath(path)
    for name in ("meta.json", "edges.tsv", "features.csv", "labels.txt"):
        if not os.path.isfile(os.path.join(path, name)):
            raise DatasetError(f"{name} not found in {path}")
    with open(os.path.join(path, "meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    n, c, d = int(meta["num_nodes"]), int(meta["num_classes"]), int(meta["feature_dim"])

    labels = np.loadtxt(os.path.join(path, "labels.txt"), dtype=np.int64, ndmin=1)
    if len(labels) != n:
        raise DatasetError(f"labels.txt has {len(labels)} rows, meta says {n}")
    if len(labels) and (labels.min() < 0 or labels.max() >= c):
        raise DatasetError(f"label out of range [0, {c})")

    features = np.loadtxt(
        os.path.join(path, "features.csv"), delimiter=",", dtype=np.float64, ndmin=2
    )
    if d == 0:
        features = np.zeros((n, 0))
    if features.shape != (n, d):
        raise DatasetError(f"features.csv has shape {features.shape}, meta says {(n, d)}")

    with warnings.catch_warnings():
        # an edgeless graph has an empty edges.tsv
        warnings.simplefilter("ignore", UserWarning)
        raw = np.loadtxt(os.path.join(path, "edges.tsv"), dtype=np.int64, delimiter="\t",
                         ndmin=2)
    raw = raw.reshape(-1, 2)
    edges, loops, dups = _canonical_edges(raw, n)
    if loops or dups:
        logger.info("%s: dropped %d self loops and %d duplicate edges", path, loops, dups)

    masks = [None, None, None]
    split_file = os.path.join(path, "splits.json")
    if os.path.isfile(split_file):
        with open(split_file, encoding="utf-8") as fh:
            splits = json.load(fh)
        for i, key in enumerate(("train", "val", "test")):
            m = np.zeros(n, dtype=bool)
            m[np.asarray(splits.get(key, []), dtype=np.int64)] = True
            masks[i] = m

    info = {
        "source": path,
        "edge_records": int(len(raw)),
        "dropped_self_loops": loops,
        "dropped_duplicates": dups,
    }
    return Graph(n, edges, features, labels, c, *masks, info=info)


def write_dataset(g: Graph, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {"num_nodes": g.num_nodes, "num_classes": g.num_classes, "feature_dim": g.feature_dim},
            fh,
        )
    with open(os.path.join(path, "edges.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(os.path.join(path, "features.csv"), "w", encoding="utf-8", newline="\n") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(os.path.join(path, "labels.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{int(y)}\n" for y in g.labels))
    if g.has_splits:
        splits = {
            key: np.flatnonzero(m).tolist()
            for key, m in (("train", g.train_mask), ("val", g.val_mask), ("test", g.test_mask))
            if m is not None
        }
        with open(os.path.join(path, "splits.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(splits, fh)


def import_linqs(content_file: str, cites_file: str, out_dir: str) -> Graph:
    """Convert the LINQS citation format (``*.content`` / ``*.cites``) into a
    dataset directory. Paper ids are mapped to contiguous node ids in file order
    and class names are sorted alphabetically."""
    ids, rows, names = [], [], []
    with open(content_file, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:-1]])
            names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(x) for x in names])
    pairs, missing = [], 0
    with open(cites_file, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            if parts[0] in index and parts[1] in index:
                pairs.append((index[parts[1]], index[parts[0]]))
            else:
                missing += 1
    if missing:
        logger.info("skipped %d citations to unknown papers", missing)
    os.makedirs(out_dir, exist_ok=True)
    # keep the raw (directed, possibly duplicated) records so the loader can report them
    with open(os.path.join(out_dir, "edges.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for u, v in pairs:
            fh.write(f"{u}\t{v}\n")
    feats = np.array(rows)
    with open(os.path.join(out_dir, "features.csv"), "w", encoding="utf-8", newline="\n") as fh:
        for row in feats:
            fh.write(",".join(f"{x:g}" for x in row) + "\n")
    with open(os.path.join(out_dir, "labels.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{y}\n" for y in labels))
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {"num_nodes": len(ids), "num_classes": len(classes), "feature_dim": feats.shape[1]},
            fh,
        )
    return load_dataset(out_dir)


# ------------------------------------------------------------- normalization

def normalize_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric normalization of A + I."""
    a = g.adjacency + sp.identity(g.num_nodes, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(deg)
    d = sp.diags(s)
    return (d @ a @ d).tocsr()


def normalize_dense(a: np.ndarray) -> np.ndarray:
    """Same normalization for a dense weighted adjacency (diagonal assumed zero)."""
    at = a + np.eye(a.shape[0])
    s = 1.0 / np.sqrt(at.sum(axis=1))
    return at * s[:, None] * s[None, :]


def normalize_dense_backward(a: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(grad_out * normalize_dense(a))`` with respect to ``a``."""
    at = a + np.eye(a.shape[0])
    deg = at.sum(axis=1)
    s = 1.0 / np.sqrt(deg)
    outer = s[:, None] * s[None, :]
    g_at = grad_out * outer
    # d s_i / d deg_i = -0.5 deg_i^{-3/2}
    weighted = grad_out * at
    r = (weighted * s[None, :]).sum(axis=1) + (weighted * s[:, None]).sum(axis=0)
    g_deg = r * (-0.5 * deg ** -1.5)
    return g_at + g_deg[:, None]


# ------------------------------------------------------------------- subgraphs

def induced_subgraph(g: Graph, nodes: Iterable[int]) -> Graph:
    nodes = np.unique(np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes,
                                 dtype=np.int64))
    if len(nodes) == 0:
        raise GraphError("empty node set")
    if nodes.min() < 0 or nodes.max() >= g.num_nodes:
        raise GraphError("node id out of range")
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = remap[g.edges]
    e = e[(e[:, 0] >= 0) & (e[:, 1] >= 0)]

    def sub(m):
        return None if m is None else m[nodes]

    return Graph(
        len(nodes), e, g.features[nodes], g.labels[nodes], g.num_classes,
        sub(g.train_mask), sub(g.val_mask), sub(g.test_mask),
        info={"parent_ids": nodes},
    )


def sbm_generate(block_sizes, p_in: float, p_out: float, d: int, num_classes: int,
                 seed: int, mean_shift: float = 1.0) -> Graph:
    """Stochastic block model; block ``b`` carries class ``b % num_classes``.

    Class ``c`` has mean ``mean_shift`` on every feature index ``j`` with
    ``j % num_classes == c`` (disjoint supports, so means are pairwise separated
    whenever ``d >= num_classes``) plus unit Gaussian noise.
    """
    block_sizes = [int(b) for b in block_sizes]
    if any(b <= 0 for b in block_sizes):
        raise GraphError("zero-size block")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise GraphError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    labels = block % num_classes
    means = np.zeros((num_classes, d))
    for c in range(num_classes):
        means[c, np.arange(d) % num_classes == c] = mean_shift
    features = means[labels] + rng.standard_normal((n, d))
    splits = random_splits(n, seed + 1)
    return Graph(n, edges, features, labels, num_classes, *splits,
                 info={"generator": "sbm", "blocks": block_sizes})


# -------------------------------------------------------------------- metrics

def degree_kl(g_a: Graph, g_b: Graph, smoothing: float = 1e-6) -> float:
    """KL divergence between the two degree histograms over their joint support."""
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    da, db = g_a.degrees(), g_b.degrees()
    support = np.union1d(da, db)
    pa = np.array([np.mean(da == k) for k in support]) + smoothing
    pb = np.array([np.mean(db == k) for k in support]) + smoothing
    pa /= pa.sum()
    pb /= pb.sum()
    return float(max(np.sum(pa * np.log(pa / pb)), 0.0))


def graph_density(g: Graph) -> float:
    n = g.num_nodes
    if n < 2:
        raise GraphError("density needs at least two nodes")
    return 2.0 * g.num_edges / (n * (n - 1))


def edge_homophily(g: Graph) -> float:
    if g.num_edges == 0:
        raise GraphError("homophily of an edgeless graph is undefined")
    y = g.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))
