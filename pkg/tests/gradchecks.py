"""Random tiny instances and finite-difference checks shared by the unit and
acceptance tests."""

import numpy as np

from fedc4.condense import matching_objective, original_grads, synth_adjacency
from fedc4.graph import normalize_dense
from fedc4.nn import (
    GCNParams,
    MLPParams,
    finite_diff_check,
    gcn_backward,
    gcn_forward,
    init_gcn,
    init_mlp,
    masked_cross_entropy,
)

REL_TOL = 1e-3
STEP = 1e-5


def tiny_gcn_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    d = int(rng.integers(1, 6))
    h = int(rng.integers(1, 5))
    c = int(rng.integers(2, 4))
    a = (rng.random((n, n)) < 0.4).astype(float)
    a = np.triu(a, 1)
    a_hat = normalize_dense(a + a.T)
    x = rng.standard_normal((n, d))
    y = rng.integers(0, c, size=n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    while True:
        params = init_gcn(d, h, c, rng)
        params = GCNParams(params.w1 * 2.0, params.w2 * 2.0)
        if (a_hat @ x @ params.w1 > 0).any():
            return a_hat, x, y, mask, params


def gcn_grad_reports(seed):
    """FD reports for the cross-entropy gradient w.r.t. W1, W2 and X."""
    a_hat, x, y, mask, p = tiny_gcn_instance(seed)

    def loss_at(w1, w2, xx):
        tr = gcn_forward(a_hat, xx, GCNParams(w1, w2))
        return masked_cross_entropy(tr.logits, y, mask)

    def grads_at(w1, w2, xx):
        tr = gcn_forward(a_hat, xx, GCNParams(w1, w2))
        return gcn_backward(a_hat, xx, GCNParams(w1, w2), y, mask, tr, input_grad=True)

    g = grads_at(p.w1, p.w2, x)
    s1, s2 = p.w1.shape, p.w2.shape
    return {
        "w1": finite_diff_check(lambda v: loss_at(v.reshape(s1), p.w2, x), p.w1.ravel(),
                                g.w1.ravel(), STEP, REL_TOL,
                                grad=lambda v: grads_at(v.reshape(s1), p.w2, x).w1, seed=seed),
        "w2": finite_diff_check(lambda v: loss_at(p.w1, v.reshape(s2), x), p.w2.ravel(),
                                g.w2.ravel(), STEP, REL_TOL,
                                grad=lambda v: grads_at(p.w1, v.reshape(s2), x).w2, seed=seed),
        "x": finite_diff_check(lambda v: loss_at(p.w1, p.w2, v.reshape(x.shape)), x.ravel(),
                               g.x.ravel(), STEP, REL_TOL,
                               grad=lambda v: grads_at(p.w1, p.w2, v.reshape(x.shape)).x,
                               seed=seed),
    }


def tiny_matching_instance(seed, per_class=False):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(4, 13))
    d = int(rng.integers(1, 6))
    h = int(rng.integers(1, 5))
    c = 2
    a = np.triu((rng.random((n, n)) < 0.4).astype(float), 1)
    a_hat = normalize_dense(a + a.T)
    x_real = rng.standard_normal((n, d))
    y_real = rng.integers(0, c, size=n)
    y_real[:2] = [0, 1]
    mask = np.ones(n, dtype=bool)
    m = int(rng.integers(2, 5))
    y_syn = np.arange(m) % c
    x_syn = rng.standard_normal((m, d))
    phi = init_mlp([2 * d, 3, 1], rng)
    phi.biases[0] = 0.1 * rng.standard_normal(3)
    ax = a_hat @ x_real
    ax_syn = normalize_dense(synth_adjacency(x_syn, phi)) @ x_syn
    # redraw theta until some hidden unit is active on both graphs, otherwise
    # every gradient is identically zero and the check is vacuous
    while True:
        theta = init_gcn(d, h, c, rng)
        theta = GCNParams(theta.w1 * 2.0, theta.w2 * 2.0)
        if (ax @ theta.w1 > 0).any() and (ax_syn @ theta.w1 > 0).any():
            break
    if per_class:
        target = [(original_grads(theta, a_hat, ax, x_real, y_real, mask & (y_real == k)),
                   y_syn == k) for k in range(c)]
    else:
        target = original_grads(theta, a_hat, ax, x_real, y_real, mask)
    return theta, target, x_syn, phi, y_syn


def _phi_flat(phi):
    return np.concatenate([a.ravel() for a in phi.arrays()])


def _phi_unflat(v, like):
    arrays, i = [], 0
    for a in like.arrays():
        arrays.append(v[i:i + a.size].reshape(a.shape))
        i += a.size
    k = len(like.weights)
    return MLPParams(arrays[:k], arrays[k:])


def matching_grad_reports(seed, per_class=False):
    """FD reports for the matching loss gradient w.r.t. x_syn and phi."""
    theta, target, x, phi, y = tiny_matching_instance(seed, per_class)

    def obj(xx, pp):
        return matching_objective([theta], [target], xx, pp, y)

    _, gx, gphi = obj(x, phi)
    return {
        "x_syn": finite_diff_check(lambda v: obj(v.reshape(x.shape), phi)[0], x.ravel(),
                                   gx.ravel(), STEP, REL_TOL,
                                   grad=lambda v: obj(v.reshape(x.shape), phi)[1], seed=seed),
        "phi": finite_diff_check(lambda v: obj(x, _phi_unflat(v, phi))[0], _phi_flat(phi),
                                 _phi_flat(gphi), STEP, REL_TOL,
                                 grad=lambda v: _phi_flat(obj(x, _phi_unflat(v, phi))[2]),
                                 seed=seed),
    }
