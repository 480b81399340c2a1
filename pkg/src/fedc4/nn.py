"""Two-layer GCN with hand-derived gradients, losses, optimizers and a
finite-difference checker.

All arrays are float64. ``a_hat`` may be a dense array or a scipy sparse matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class GCNParams:
    w1: np.ndarray
    w2: np.ndarray

    def copy(self) -> "GCNParams":
        return GCNParams(self.w1.copy(), self.w2.copy())

    @property
    def num_floats(self) -> int:
        return self.w1.size + self.w2.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.w2.ravel()])

    @classmethod
    def from_flat(cls, v: np.ndarray, like: "GCNParams") -> "GCNParams":
        n1 = like.w1.size
        return cls(v[:n1].reshape(like.w1.shape).copy(), v[n1:].reshape(like.w2.shape).copy())


@dataclass
class ForwardTrace:
    ax: np.ndarray       # A_hat X
    pre: np.ndarray      # A_hat X W1
    h1: np.ndarray       # ReLU(pre), the node embeddings
    ah: np.ndarray       # A_hat H1
    logits: np.ndarray


@dataclass
class GCNGrads:
    w1: np.ndarray
    w2: np.ndarray
    x: Optional[np.ndarray] = None


@dataclass
class SGDConfig:
    learning_rate: float = 0.5
    weight_decay: float = 5e-4
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_gcn(d: int, hidden: int, num_classes: int, rng: np.random.Generator) -> GCNParams:
    return GCNParams(glorot(rng, d, hidden), glorot(rng, hidden, num_classes))


def _check_shapes(a_hat, x, params: GCNParams):
    n = x.shape[0]
    if a_hat.shape != (n, n):
        raise ValueError(f"adjacency {a_hat.shape} does not match {n} nodes")
    if params.w1.shape[0] != x.shape[1]:
        raise ValueError(f"W1 expects {params.w1.shape[0]} features, got {x.shape[1]}")
    if params.w2.shape[0] != params.w1.shape[1]:
        raise ValueError("W1/W2 hidden sizes differ")


def gcn_forward(a_hat, x: np.ndarray, params: GCNParams, ax: Optional[np.ndarray] = None
                ) -> ForwardTrace:
    """H1 = ReLU(A X W1), logits = A H1 W2. ``ax`` may carry a cached ``A X``."""
    _check_shapes(a_hat, x, params)
    if ax is None:
        ax = np.asarray(a_hat @ x)
    pre = ax @ params.w1
    h1 = np.maximum(pre, 0.0)
    ah = np.asarray(a_hat @ h1)
    logits = ah @ params.w2
    return ForwardTrace(ax, pre, h1, ah, logits)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _mask_weights(labels, mask, n) -> np.ndarray:
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mask selects no rows")
    return mask / count


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask=None) -> float:
    w = _mask_weights(labels, mask, logits.shape[0])
    lp = log_softmax(logits)
    return float(-np.sum(w * lp[np.arange(len(labels)), labels]))


def ce_logit_grad(logits, labels, mask=None, weight: float = 1.0) -> np.ndarray:
    w = _mask_weights(labels, mask, logits.shape[0]) * weight
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g * w[:, None]


def gcn_backward(a_hat, x, params: GCNParams, labels, mask, trace: ForwardTrace,
                 weight: float = 1.0, input_grad: bool = False) -> GCNGrads:
    """Gradients of ``weight * masked_cross_entropy(gcn_forward(...))``."""
    _check_shapes(a_hat, x, params)
    g_logits = ce_logit_grad(trace.logits, labels, mask, weight)
    g_w2 = trace.ah.T @ g_logits
    g_ah = g_logits @ params.w2.T
    g_h1 = np.asarray(a_hat.T @ g_ah)
    g_pre = g_h1 * (trace.pre > 0)
    g_w1 = trace.ax.T @ g_pre
    g_x = None
    if input_grad:
        g_x = np.asarray(a_hat.T @ (g_pre @ params.w1.T))
    return GCNGrads(g_w1, g_w2, g_x)


def sgd_step(params: GCNParams, grads: GCNGrads, cfg: SGDConfig,
             velocity: Optional[GCNParams] = None) -> GCNParams:
    """p <- p - lr (g + wd p); classical momentum when ``cfg.momentum > 0``."""
    out = []
    for name in ("w1", "w2"):
        p, g = getattr(params, name), getattr(grads, name)
        if p.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        step = g + cfg.weight_decay * p
        if cfg.momentum and velocity is not None:
            v = getattr(velocity, name)
            v *= cfg.momentum
            v += step
            step = v
        out.append(p - cfg.learning_rate * step)
    return GCNParams(*out)


def accuracy(logits: np.ndarray, labels: np.ndarray, mask=None) -> float:
    pred = logits.argmax(axis=1)
    if mask is None:
        return float(np.mean(pred == labels))
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    return float(np.mean(pred[mask] == labels[mask]))


def train_gcn(a_hat, x, labels, mask, params: GCNParams, epochs: int, cfg: SGDConfig
              ) -> GCNParams:
    """Full-batch SGD for a fixed number of epochs."""
    ax = np.asarray(a_hat @ x)
    velocity = GCNParams(np.zeros_like(params.w1), np.zeros_like(params.w2))
    for _ in range(epochs):
        trace = gcn_forward(a_hat, x, params, ax=ax)
        grads = gcn_backward(a_hat, x, params, labels, mask, trace)
        params = sgd_step(params, grads, cfg, velocity)
    return params


class Adam:
    """Adam over a list of arrays, updated in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ------------------------------------------------------------------ MLP

@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(sizes: list[int], rng: np.random.Generator) -> MLPParams:
    ws = [glorot(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    return MLPParams(ws, bs)


@dataclass
class MLPTrace:
    inputs: list[np.ndarray] = field(default_factory=list)
    pres: list[np.ndarray] = field(default_factory=list)


def mlp_forward(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, MLPTrace]:
    """ReLU on hidden layers, linear output."""
    trace = MLPTrace()
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        trace.inputs.append(h)
        z = h @ w + b
        trace.pres.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, trace


def mlp_backward(params: MLPParams, trace: MLPTrace, grad_out: np.ndarray
                 ) -> tuple[MLPParams, np.ndarray]:
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    g = grad_out
    for i in range(len(params.weights) - 1, -1, -1):
        if i != len(params.weights) - 1:
            g = g * (trace.pres[i] > 0)
        gw[i] = trace.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return MLPParams(gw, gb), g


# ------------------------------------------------------ finite differences

@dataclass
class FDReport:
    max_rel_err: float
    worst_index: int
    checked: int
    passed: bool
    retried: bool = False


def _fd_compare(f, x0, analytic, step, rel_tol):
    n = len(x0)
    worst, worst_i, checked = 0.0, -1, 0
    kink = False
    f0 = f(x0)
    if not np.isfinite(f0):
        raise FloatingPointError("objective is not finite at x0")
    for i in range(n):
        xp = x0.copy()
        xp[i] += step
        xm = x0.copy()
        xm[i] -= step
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"objective is not finite near index {i}")
        num = (fp - fm) / (2 * step)
        a = analytic[i]
        if abs(a) < 1e-8 and abs(num) < 1e-8:
            continue
        checked += 1
        err = abs(a - num) / max(abs(a), abs(num))
        if err > worst:
            worst, worst_i = err, i
            fwd, bwd = (fp - f0) / step, (f0 - fm) / step
            kink = abs(fwd - bwd) > rel_tol * max(abs(fwd), abs(bwd), 1e-8)
    return worst, worst_i, checked, kink


def finite_diff_check(f: Callable[[np.ndarray], float], x0: np.ndarray, analytic: np.ndarray,
                      step: float = 1e-5, rel_tol: float = 1e-3,
                      grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      seed: int = 0) -> FDReport:
    """Compare ``analytic`` against central differences of ``f`` at ``x0``.

    Entries where both values are below 1e-8 are skipped. When the worst entry
    looks like a ReLU kink sits inside the probe (one-sided slopes disagree) and
    ``grad`` is supplied, the point is jittered and the check is run once more.
    """
    x0 = np.asarray(x0, dtype=np.float64).copy()
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    worst, worst_i, checked, kink = _fd_compare(f, x0, analytic, step, rel_tol)
    if worst > rel_tol and kink and grad is not None:
        rng = np.random.default_rng(seed)
        x1 = x0 + 1e-3 * rng.standard_normal(x0.shape)
        a1 = np.asarray(grad(x1), dtype=np.float64).ravel()
        worst, worst_i, checked, _ = _fd_compare(f, x1, a1, step, rel_tol)
        return FDReport(float(worst), int(worst_i), checked, bool(worst <= rel_tol), retried=True)
    return FDReport(float(worst), int(worst_i), checked, bool(worst <= rel_tol))
