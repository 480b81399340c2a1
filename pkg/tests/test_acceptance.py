"""Exit criteria. Each test registers one PASS/FAIL line (shown in the terminal
summary) and then asserts it. Criteria that need the real Cora dataset read
it from the directory in ``FEDC4_CORA`` and fail when it is not configured.

Tests prefixed ``test_surrogate_`` are supporting evidence on the synthetic
Cora-shaped graph; they are not criteria and their numbers are not Cora numbers.
"""

import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from fedc4.cli import main
from fedc4.condense import CondenseConfig, condense, condensed_test_accuracy
from fedc4.federation import FederationConfig, client_topology, ledger_summary, run
from fedc4.graph import sbm_generate, write_dataset
from fedc4.node_selector import swd
from fedc4.privacy import influence_scaling, scaling_config
from fedc4.surrogate import cora_like

from conftest import cora_path, load_cora, record_criterion
from gradchecks import gcn_grad_reports, matching_grad_reports
from oracles import brute_matching_w1, quantile_grid_w1

pytestmark = pytest.mark.acceptance

SEEDS = (0, 1, 2)
NO_CORA = "FEDC4_CORA is not set; the real Cora dataset is required"


def _require_cora(number, name):
    if not cora_path():
        record_criterion(number, name, False, NO_CORA)
        pytest.fail(NO_CORA)


@lru_cache(maxsize=None)
def _cora_graph():
    return load_cora()


@lru_cache(maxsize=None)
def _cora_run(mode, seed, num_clients=5, noise_b=0.0):
    """One federation run on Cora with the default hyperparameters (ratio 8%,
    T=200); cached because several criteria read the same runs."""
    cfg = FederationConfig(num_clients=num_clients, rounds=200, seed=seed, mode=mode,
                           condense=CondenseConfig(ratio=0.08), noise_b=noise_b)
    states = []
    t0 = time.perf_counter()
    metrics, ledger, _ = run(_cora_graph(), cfg, clients_out=states)
    return metrics, ledger, states, cfg, time.perf_counter() - t0


# ------------------------------------------------------------------ 1

def test_criterion_01_gradients():
    name = "analytic gradients vs central differences"
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for seed in range(20):
        reps = dict(gcn_grad_reports(seed))
        reps.update({f"lmat_{k}": v for k, v in matching_grad_reports(seed).items()})
        for key, rep in reps.items():
            worst = max(worst, rep.max_rel_err)
            if not rep.passed or rep.checked == 0:
                failures.append((seed, key, rep.max_rel_err))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    record_criterion(1, name, ok, f"20 instances, max rel err {worst:.2e} (tol 1e-3), "
                                  f"{elapsed:.1f}s (limit 60s), failures {failures}")
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_02_swd_oracles():
    rng = np.random.default_rng(2024)
    eq_err = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a, b = rng.standard_normal(n), rng.standard_normal(n) * 3
        eq_err = max(eq_err, abs(swd(a, b) - brute_matching_w1(a, b)))
    uneq_err = 0.0
    for _ in range(50):
        n, m = rng.integers(1, 9, size=2)
        while m == n:
            m = int(rng.integers(1, 9))
        a, b = rng.standard_normal(int(n)), rng.standard_normal(int(m)) + 1
        uneq_err = max(uneq_err, abs(swd(a, b) - quantile_grid_w1(a, b)))
    ok = eq_err <= 1e-9 and uneq_err <= 1e-6
    record_criterion(2, "swd oracle equivalence", ok,
                     f"equal-size max err {eq_err:.1e} (tol 1e-9), "
                     f"unequal-size max err {uneq_err:.1e} (tol 1e-6)")
    assert ok


# ------------------------------------------------------------------ 3

@pytest.mark.slow
def test_criterion_03_cora_condensation():
    name = "Cora condensation at 4%"
    _require_cora(3, name)
    g = _cora_graph()
    t0 = time.perf_counter()
    accs = []
    for seed in SEEDS:
        s = condense(g, CondenseConfig(ratio=0.04), seed)
        accs.append(condensed_test_accuracy(g, s, seed))
    elapsed = time.perf_counter() - t0
    ok = np.mean(accs) >= 0.70 and elapsed < 600
    record_criterion(3, name, ok, f"mean test acc {np.mean(accs):.4f} over seeds {accs} "
                                  f"(floor 0.70), {elapsed:.0f}s (limit 600s)")
    assert ok


# ------------------------------------------------------------------ 4

@pytest.mark.slow
def test_criterion_04_cora_end_to_end():
    name = "Cora K=5 ratio 8% T=200: FedC4 vs fedavg_condensed"
    _require_cora(4, name)
    ours = [_cora_run("fedc4", s)[0][-1].global_test_acc for s in SEEDS]
    base = [_cora_run("fedavg_condensed", s)[0][-1].global_test_acc for s in SEEDS]
    elapsed = sum(_cora_run(m, s)[4] for m in ("fedc4", "fedavg_condensed") for s in SEEDS)
    m_ours, m_base = float(np.mean(ours)), float(np.mean(base))
    ok = m_ours >= 0.78 and m_ours >= m_base + 0.003 and elapsed < 45 * 60
    record_criterion(4, name, ok, f"fedc4 {m_ours:.4f} {ours}, fedavg_condensed {m_base:.4f} "
                                  f"{base} (need >= 0.78 and margin >= 0.003), "
                                  f"{elapsed:.0f}s (limit 2700s)")
    assert ok


# ------------------------------------------------------------------ 5

@pytest.mark.slow
def test_criterion_05_cora_topology():
    name = "Cora client 0 topology recovery"
    _require_cora(5, name)
    states = _cora_run("fedc4", 0)[2]
    rep = client_topology(states[0])
    kl_ok = rep.kl[2] < rep.kl[1]
    dens_ok = abs(rep.density[2] - rep.density[0]) < abs(rep.density[1] - rep.density[0])
    hom_ok = rep.homophily[2] > rep.homophily[1]
    ok = bool(kl_ok and dens_ok and hom_ok)
    record_criterion(5, name, ok, f"kl {np.round(rep.kl, 4)}, density "
                                  f"{np.round(rep.density, 4)}, homophily "
                                  f"{np.round(rep.homophily, 4)} (original/condensed/rebuilt)")
    assert ok


# ------------------------------------------------------------------ 6

def _sbm_ledger_checks():
    g = sbm_generate([50] * 4, 0.2, 0.02, 8, 4, seed=0)
    base = dict(num_clients=4, rounds=10, seed=0, condense=CondenseConfig(ratio=0.08))
    _, sc_ledger, params = run(g, FederationConfig(mode="fedavg", **base))
    p = params.num_floats
    total = sum(e.floats for e in sc_ledger.entries)
    a_ok = total == 2 * 4 * 10 * p
    _, full, _ = run(g, FederationConfig(mode="fedc4_fullbroadcast", **base))
    _, sel, _ = run(g, FederationConfig(mode="fedc4", **base))
    fc, sc = full.message_counts("stats"), sel.message_counts("stats")
    c_ok = all(sc.get(t, 0) <= fc[t] for t in fc) and any(sc.get(t, 0) < fc[t] for t in fc)
    return a_ok, f"S-C total {total} vs 2CTp {2 * 4 * 10 * p}", c_ok, \
        f"stats msgs selective {[sc.get(t, 0) for t in sorted(fc)]} vs full {[fc[t] for t in sorted(fc)]}"


@pytest.mark.slow
def test_criterion_06_ledger():
    name = "communication ledger"
    a_ok, a_msg, c_ok, c_msg = _sbm_ledger_checks()
    if cora_path():
        _, led, _, cfg, _ = _cora_run("fedavg", 0)
        p = led.meta["model_floats"]
        a_ok = a_ok and sum(e.floats for e in led.entries) == 2 * cfg.num_clients * 200 * p
        summ = ledger_summary(_cora_run("fedc4", 0)[1])
        cc = summ["analytic"]["c_c"]
        worst = max(v["payload"] + v["stats"] for v in summ["per_round"].values())
        b_ok = worst * 10 <= cc
        b_msg = f"Cora max per-round payload+stats {worst} vs C^2*N*d {cc:.0f} (need factor 10)"
        _, full, _, _, _ = _cora_run("fedc4_fullbroadcast", 0)
        fc = full.message_counts("stats")
        sc = _cora_run("fedc4", 0)[1].message_counts("stats")
        c_ok = c_ok and all(sc.get(t, 0) <= fc[t] for t in fc) and \
            any(sc.get(t, 0) < fc[t] for t in fc)
    else:
        b_ok, b_msg = False, NO_CORA
    ok = a_ok and b_ok and c_ok
    record_criterion(6, name, ok, f"(a) {'ok' if a_ok else 'FAIL'} {a_msg}; "
                                  f"(b) {'ok' if b_ok else 'FAIL'} {b_msg}; "
                                  f"(c) {'ok' if c_ok else 'FAIL'} {c_msg}")
    assert ok


# ------------------------------------------------------------------ 7

@pytest.mark.slow
def test_criterion_07_privacy_scaling():
    t0 = time.perf_counter()
    slope, records = influence_scaling([100, 200, 400, 800], scaling_config(), SEEDS)
    elapsed = time.perf_counter() - t0
    means = {n: float(np.mean([r.delta for r in records if r.n == n]))
             for n in (100, 200, 400, 800)}
    ok = -1.6 <= slope <= -0.4 and elapsed < 1200
    record_criterion(7, "node-removal influence scaling", ok,
                     f"slope {slope:.3f} (range [-1.6, -0.4]), mean delta by n "
                     f"{ {n: round(v, 5) for n, v in means.items()} }, {elapsed:.0f}s")
    assert ok


# ------------------------------------------------------------------ 8

@pytest.mark.slow
def test_criterion_08_laplace_robustness():
    name = "Laplace noise robustness on Cora"
    _require_cora(8, name)
    accs = {b: _cora_run("fedc4", 0, noise_b=b)[0][-1].global_test_acc
            for b in (0.0, 0.01, 0.05, 0.1)}
    ok = abs(accs[0.01] - accs[0.0]) <= 0.02
    record_criterion(8, name, ok, f"accuracy by b {accs} (|acc(0.01) - acc(0)| <= 0.02)")
    assert ok


# ------------------------------------------------------------------ 9

def test_criterion_09_determinism(tmp_path):
    data = tmp_path / "data"
    write_dataset(sbm_generate([10] * 12, 0.4, 0.02, 8, 4, seed=0), str(data))
    k = 4
    cfg = tmp_path / "cfg.json"
    cfg.write_text(f'{{"dataset_path": "{data}", "num_clients": {k}, "rounds": 5, '
                   f'"outer_epochs": 20, "seed": 7}}')
    blobs = {"metrics.csv": set(), "ledger.csv": set()}
    for i, workers in enumerate((1, 1, k, k)):
        out = tmp_path / f"run{i}"
        assert main(["run", "--config", str(cfg), "--out", str(out),
                     "--workers", str(workers)]) == 0
        for name in blobs:
            blobs[name].add((out / name).read_bytes())
    ok = all(len(v) == 1 for v in blobs.values())
    record_criterion(9, "byte-identical reruns (workers 1 and K)", ok,
                     f"distinct metrics.csv {len(blobs['metrics.csv'])}, "
                     f"distinct ledger.csv {len(blobs['ledger.csv'])} over 4 runs")
    assert ok


# ------------------------------------------------------------------ 10

@pytest.mark.slow
def test_criterion_10_client_count():
    name = "Cora client-count robustness K in {5, 10, 15}"
    _require_cora(10, name)
    accs = {k: _cora_run("fedc4", 0, num_clients=k)[0][-1].global_test_acc for k in (5, 10, 15)}
    spread = max(accs.values()) - min(accs.values())
    detail = f"accuracy {accs}, spread {spread:.4f} (limit 0.05, warning band 0.08)"
    if spread <= 0.05:
        record_criterion(10, name, True, detail)
    elif spread <= 0.08:
        record_criterion(10, name, True, detail, status="WARN")
        warnings.warn(f"client-count spread {spread:.4f} is inside the warning band")
    else:
        record_criterion(10, name, False, detail)
    assert spread <= 0.08


# ------------------------------------------------------------ evidence only

@pytest.mark.slow
def test_surrogate_condensation_evidence():
    """Criterion-3 pipeline on the synthetic Cora-shaped graph, one seed."""
    g = cora_like(0)
    s = condense(g, CondenseConfig(ratio=0.04), 0)
    acc = condensed_test_accuracy(g, s, 0)
    prior = np.bincount(g.labels[g.train_mask]).max() / g.train_mask.sum()
    print(f"surrogate evidence (not a criterion): condensed 4% test acc {acc:.4f}, "
          f"majority-class rate {prior:.4f}")
    assert np.isfinite(acc)


@pytest.mark.slow
def test_surrogate_federation_evidence():
    """Short criterion-4 style comparison on the synthetic graph, one seed, T=20."""
    g = cora_like(0)
    out = {}
    for mode in ("fedc4", "fedavg_condensed", "fedavg"):
        cfg = FederationConfig(num_clients=5, rounds=20, seed=0, mode=mode,
                               condense=CondenseConfig(ratio=0.08))
        metrics, ledger, _ = run(g, cfg)
        out[mode] = round(metrics[-1].global_test_acc, 4)
        if mode == "fedc4":
            out["payload_floats"] = ledger.totals()["payload"]
    print(f"surrogate evidence (not a criterion): {out}")
    assert all(np.isfinite(v) for v in out.values())
