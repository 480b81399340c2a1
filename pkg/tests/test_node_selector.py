import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from fedc4.customizer import ClientStats
from fedc4.node_selector import (
    NodePayload,
    NSConfig,
    build_payloads,
    cluster_clients,
    select_nodes_for_target,
    swd,
)

from oracles import brute_matching_w1, quantile_grid_w1

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8)


def _stats(dis, mu=(1.0, 0.0)):
    return ClientStats(np.asarray(dis, dtype=float), np.asarray(mu, dtype=float), len(dis))


def test_swd_examples(rng):
    d = rng.random(6)
    assert swd(d, d) == 0.0
    assert swd(d, d + 2.5) == pytest.approx(2.5, abs=1e-12)
    assert swd([0, 1], [1, 2]) == 1.0
    assert swd([0, 1], [1, 2]) == brute_matching_w1([0, 1], [1, 2])
    with pytest.raises(ValueError):
        swd([], [1.0])


def test_swd_matches_brute_force(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a, b = rng.standard_normal(n), rng.standard_normal(n) * 2
        assert abs(swd(a, b) - brute_matching_w1(a, b)) <= 1e-9


def test_swd_unequal_sizes_oracles(rng):
    for _ in range(50):
        a = rng.standard_normal(int(rng.integers(1, 9)))
        b = rng.standard_normal(int(rng.integers(1, 9)))
        assert abs(swd(a, b) - quantile_grid_w1(a, b)) <= 1e-6
        assert abs(swd(a, b) - wasserstein_distance(a, b)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_swd_metric_axioms(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.standard_normal(n) for _ in range(3))
    assert swd(a, b) == pytest.approx(swd(b, a), abs=1e-12)
    assert swd(a, a) == 0.0
    assert swd(a, c) <= swd(a, b) + swd(b, c) + 1e-9


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_swd_matches_scipy(a, b):
    assert swd(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-7)


def test_cluster_examples():
    same = [_stats([1.0, 2.0]) for _ in range(4)]
    assert all(v == frozenset(range(4)) for v in cluster_clients(same, NSConfig()).values())
    groups = [_stats([0.0, 0.01]), _stats([0.02, 0.0]), _stats([100.0, 100.1]),
              _stats([99.9, 100.0])]
    cl = cluster_clients(groups, NSConfig(delta_cluster=1.0))
    assert cl[0] == {0, 1} and cl[2] == {2, 3}
    with pytest.raises(ValueError):
        cluster_clients(groups[:1], NSConfig())


def test_cluster_symmetry(rng):
    stats = [_stats(rng.random(5) * (k + 1)) for k in range(6)]
    cl = cluster_clients(stats, NSConfig())
    for c, members in cl.items():
        assert c in members
        for o in members:
            assert c in cl[o]


def test_select_examples():
    h = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(select_nodes_for_target(h, np.array([1.0, 0.0]), 0.38), [0, 1])
    np.testing.assert_array_equal(select_nodes_for_target(h[2:], np.array([1.0, 0.0]), 0.38), [])
    zero_row = np.array([[0.0, 0.0], [2.0, 0.0]])
    np.testing.assert_array_equal(select_nodes_for_target(zero_row, np.array([1.0, 0.0]), -1.0), [1])
    with pytest.raises(ValueError):
        select_nodes_for_target(h, np.zeros(2), 0.38)


def test_select_scale_invariance(rng):
    h = rng.standard_normal((10, 4))
    mu = rng.standard_normal(4)
    np.testing.assert_array_equal(select_nodes_for_target(h, mu, 0.2),
                                  select_nodes_for_target(7.5 * h, mu, 0.2))


def test_build_payloads_examples():
    x = np.arange(8.0).reshape(4, 2)
    y = np.array([0, 0, 1, 1])
    h = np.array([[1.0, 0.0], [2.0, 0.1], [0.0, 1.0], [0.1, 3.0]])
    stats = [_stats([1.0], [1.0, 1.0]), _stats([1.0], [1.0, 0.0]), _stats([1.0], [0.0, 1.0])]
    assert build_payloads(0, {0: frozenset({0})}, stats, x, y, h, NSConfig()) == []
    cl = {0: frozenset({0, 1, 2})}
    out = build_payloads(0, cl, stats, x, y, h, NSConfig())
    assert [(p.source, p.target) for p in out] == [(0, 1), (0, 2)]
    np.testing.assert_array_equal(out[0].index, [0, 1])
    np.testing.assert_array_equal(out[1].index, [2, 3])
    assert not set(out[0].index) & set(out[1].index)
    np.testing.assert_array_equal(out[1].features, x[[2, 3]])
    assert out[0].num_floats == 2 * (2 + 1 + 2)
    floor = build_payloads(0, cl, stats, x, y, h, NSConfig(tau=-1.0))
    assert all(p.num_rows == 4 for p in floor)


def test_payload_invariants():
    with pytest.raises(ValueError):
        NodePayload(1, 1, np.array([0]), np.zeros((1, 2)), np.zeros(1, int), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        NSConfig(tau=1.0)
