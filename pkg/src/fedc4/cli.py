"""Command-line runner: run, sweep, report, condense, partition, privacy and
import-linqs subcommands driven by a flat JSON config."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
import traceback
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .condense import CondenseConfig, condense, condensed_test_accuracy, write_condensed
from .federation import (
    FederationConfig,
    client_topology,
    ledger_summary,
    run,
    write_metrics_csv,
)
from .graph import Graph, import_linqs, load_dataset, random_splits
from .louvain import louvain_partition
from .nn import SGDConfig
from .node_selector import NSConfig
from .privacy import influence_scaling, scaling_config, write_privacy_csv
from .rebuilder import RebuildConfig

logger = logging.getLogger("fedc4")

SWEEPABLE = ("num_clients", "tau", "alpha", "beta", "ratio", "noise_b")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset_path: str = ""
    mode: str = "fedc4"
    num_clients: int = 5
    rounds: int = 200
    local_epochs: int = 5
    ratio: float = 0.08
    delta_sparsify: float = 0.5
    tau: float = 0.38
    alpha: float = 150.0
    beta: float = 250.0
    hidden_dim: int = 64
    lr: float = 0.5
    weight_decay: float = 5e-4
    epsilon: float = 1e-8
    delta_cluster: object = "median"
    edge_threshold: float = 0.01
    seed: int = 0
    output_dir: str = "out"
    noise_b: float = 0.0
    # condensation schedule
    outer_epochs: int = 100
    theta_samples: int = 4
    lr_feat: float = 0.1
    lr_adj: float = 0.01
    alt_steps_adj: int = 1
    alt_steps_feat: int = 5
    mlp_hidden: int = 32
    match: str = "full"
    rebuild_iters: int = 300

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def federation(self, workers: int = 1) -> FederationConfig:
        return FederationConfig(
            num_clients=self.num_clients,
            rounds=self.rounds,
            local_epochs=self.local_epochs,
            condense=self.condense_config(),
            ns=NSConfig(tau=self.tau, delta_cluster=self.delta_cluster),
            rebuild=RebuildConfig(alpha=self.alpha, beta=self.beta, max_iters=self.rebuild_iters,
                                  edge_threshold=self.edge_threshold),
            sgd=SGDConfig(learning_rate=self.lr, weight_decay=self.weight_decay),
            seed=self.seed,
            mode=self.mode,
            hidden_dim=self.hidden_dim,
            epsilon=self.epsilon,
            noise_b=self.noise_b,
            workers=workers,
        )

    def condense_config(self) -> CondenseConfig:
        return CondenseConfig(
            ratio=self.ratio, delta_sparsify=self.delta_sparsify, outer_epochs=self.outer_epochs,
            theta_samples=self.theta_samples, lr_feat=self.lr_feat, lr_adj=self.lr_adj,
            alt_steps_adj=self.alt_steps_adj, alt_steps_feat=self.alt_steps_feat,
            hidden_dim=self.hidden_dim, mlp_hidden=self.mlp_hidden, match=self.match,
        )


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name: f for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key: {key!r}")
    values = {}
    for key, val in raw.items():
        default = known[key].default
        if key == "delta_cluster":
            if not (val == "median" or isinstance(val, (int, float))):
                raise ConfigError(f"bad value for 'delta_cluster': {val!r}")
        elif isinstance(default, bool) or isinstance(default, str):
            if not isinstance(val, str):
                raise ConfigError(f"bad value for {key!r}: expected a string")
        elif isinstance(default, int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"bad value for {key!r}: expected an integer")
        elif isinstance(default, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"bad value for {key!r}: expected a number")
            val = float(val)
        values[key] = val
    cfg = ExperimentConfig(**values)
    try:
        cfg.federation()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def read_config(path: str, seed: Optional[int] = None, out: Optional[str] = None
                ) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    return parse_config(raw)


def load_graph(cfg: ExperimentConfig) -> Graph:
    """Dataset directory, or ``surrogate:cora_like[:seed]`` for the synthetic
    stand-in. Missing splits default to seeded 60/20/20."""
    path = cfg.dataset_path
    if path.startswith("surrogate:"):
        from .surrogate import cora_like
        parts = path.split(":")
        if parts[1] != "cora_like":
            raise ConfigError(f"unknown surrogate {parts[1]!r}")
        g = cora_like(int(parts[2]) if len(parts) > 2 else 0)
    else:
        if not path:
            raise ConfigError("dataset_path is required")
        g = load_dataset(path)
    if not g.has_splits:
        g = g.with_splits(*random_splits(g.num_nodes, cfg.seed))
    return g


# --------------------------------------------------------------- commands

def _write_summary(path: str, cfg: ExperimentConfig, body: dict) -> None:
    doc = {"config_hash": cfg.hash()}
    doc.update(body)
    doc["config"] = cfg.to_dict()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"not serializable: {type(x)}")


def execute_run(cfg: ExperimentConfig, workers: int = 1) -> dict:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    g = load_graph(cfg)
    t0 = time.perf_counter()
    clients: list = []
    metrics, ledger, _ = run(g, cfg.federation(workers), clients)
    wall = time.perf_counter() - t0
    write_metrics_csv(metrics, os.path.join(out, "metrics.csv"))
    ledger.write_csv(os.path.join(out, "ledger.csv"))
    topo = None
    if clients and clients[0].rebuilt is not None:
        rep = client_topology(clients[0])
        rep.write_csv(os.path.join(out, "topology.csv"))
        topo = {name: {"kl": k, "density": d, "homophily": h} for name, k, d, h in rep.rows()}
    summ = ledger_summary(ledger)
    body = {
        "final_accuracy": metrics[-1].global_test_acc,
        "final_mean_client_accuracy": metrics[-1].mean_client_test_acc,
        "totals": summ["totals"],
        "total_payload_floats": summ["totals"]["payload"],
        "analytic": summ["analytic"],
        "sizes": summ["sizes"],
        "topology": topo,
        "wall_time_s": round(wall, 3),
    }
    _write_summary(os.path.join(out, "summary.json"), cfg, body)
    return body


def cmd_run(args) -> int:
    cfg = read_config(args.config, args.seed, args.out)
    body = execute_run(cfg, args.workers)
    print(f"final accuracy {body['final_accuracy']:.6f} -> {cfg.output_dir}")
    return 0


def _parse_values(axis: str, text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(int(tok) if axis == "num_clients" else float(tok))
        except ValueError:
            raise ConfigError(f"bad sweep value {tok!r} for {axis!r}") from None
    if not vals:
        raise ConfigError("no sweep values given")
    return vals


def cmd_sweep(args) -> int:
    base = read_config(args.config, args.seed, args.out)
    if args.axis not in SWEEPABLE:
        raise ConfigError(f"axis {args.axis!r} is not sweepable (choose from {SWEEPABLE})")
    values = _parse_values(args.axis, args.values)
    rows = []
    for v in values:
        raw = base.to_dict()
        raw[args.axis] = v
        raw["output_dir"] = os.path.join(base.output_dir, f"{args.axis}={v}")
        cfg = parse_config(raw)
        body = execute_run(cfg, args.workers)
        rows.append((v, body["final_accuracy"], body["total_payload_floats"]))
        logger.info("sweep %s=%s acc %.4f", args.axis, v, body["final_accuracy"])
    os.makedirs(base.output_dir, exist_ok=True)
    with open(os.path.join(base.output_dir, "sweep.csv"), "w", newline="\n",
              encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "final_accuracy", "total_payload_floats"])
        for v, acc, pf in rows:
            w.writerow([v, f"{acc:.6f}", pf])
    if args.axis == "noise_b":
        with open(os.path.join(base.output_dir, "noise.csv"), "w", newline="\n",
                  encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["b", "final_accuracy"])
            for v, acc, _ in rows:
                w.writerow([v, f"{acc:.6f}"])
    print(f"{len(rows)} runs -> {base.output_dir}")
    return 0


def _read_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def format_report(out_dir: str) -> str:
    needed = ("metrics.csv", "ledger.csv", "summary.json")
    for name in needed:
        if not os.path.isfile(os.path.join(out_dir, name)):
            raise FileNotFoundError(f"{name} not found in {out_dir}")
    metrics = _read_csv(os.path.join(out_dir, "metrics.csv"))
    ledger = _read_csv(os.path.join(out_dir, "ledger.csv"))
    with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    accs = [float(m["global_test_acc"]) for m in metrics]
    final = accs[-1]
    conv = next((int(m["round"]) for m, a in zip(metrics, accs) if a >= 0.95 * final), None)
    totals = {k: 0 for k in ("params_up", "params_down", "stats", "payload")}
    for e in ledger:
        totals[e["kind"]] += int(e["floats"])
    sc = totals["params_up"] + totals["params_down"]
    cc = totals["stats"] + totals["payload"]
    fedc4 = cc if summary["config"]["mode"].startswith("fedc4") else 0
    an = summary["analytic"]
    lines = [
        f"run directory      {out_dir}",
        f"mode               {summary['config']['mode']}",
        f"final accuracy     {final:.6f}",
        f"convergence round  {conv}",
        "",
        f"{'cost model':<12}{'measured':>16}{'analytic':>20}",
        f"{'S-C':<12}{sc:>16d}{an['s_c']:>20.1f}",
        f"{'C-C':<12}{(0 if fedc4 else cc):>16d}{an['c_c']:>20.1f}",
        f"{'FedC4':<12}{fedc4:>16d}{an['fedc4']:>20.1f}",
    ]
    topo_path = os.path.join(out_dir, "topology.csv")
    if os.path.isfile(topo_path):
        lines += ["", f"{'graph':<12}{'kl':>12}{'density':>12}{'homophily':>12}"]
        for r in _read_csv(topo_path):
            lines.append(f"{r['graph']:<12}{r['kl']:>12}{r['density']:>12}{r['homophily']:>12}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    try:
        text = format_report(args.dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(text)
    return 0


def cmd_condense(args) -> int:
    cfg = read_config(args.config, args.seed, args.out)
    g = load_graph(cfg)
    s = condense(g, cfg.condense_config(), cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_condensed(s, cfg.output_dir)
    acc = condensed_test_accuracy(g, s, cfg.seed, 200, SGDConfig(cfg.lr, cfg.weight_decay),
                                  cfg.hidden_dim)
    _write_summary(os.path.join(cfg.output_dir, "condense.json"), cfg, {
        "num_nodes": s.num_nodes, "test_accuracy": acc,
        "loss_first": s.history[0] if s.history else None,
        "loss_last": s.history[-1] if s.history else None,
    })
    print(f"condensed {g.num_nodes} -> {s.num_nodes} nodes, test accuracy {acc:.6f}")
    return 0


def cmd_partition(args) -> int:
    cfg = read_config(args.config, args.seed, args.out)
    g = load_graph(cfg)
    part = louvain_partition(g, cfg.num_clients, cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "assignment.csv"), "w", newline="\n",
              encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "client"])
        for i, c in enumerate(part.assignment):
            w.writerow([i, int(c)])
    print("client sizes", " ".join(str(int(x)) for x in part.sizes()))
    return 0


def cmd_privacy(args) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    seeds = list(range(args.seeds))
    cfg = scaling_config(args.m, args.epochs)
    slope, records = influence_scaling(sizes, cfg, seeds, removals=args.removals)
    os.makedirs(args.out, exist_ok=True)
    write_privacy_csv(records, os.path.join(args.out, "privacy.csv"))
    print(f"log-log slope {slope:.6f}")
    return 0


def cmd_import(args) -> int:
    g = import_linqs(args.content, args.cites, args.out)
    print(f"imported {g.num_nodes} nodes, {g.num_edges} edges, {g.num_classes} classes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedc4")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("run")
    common(p)
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("sweep")
    common(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated")
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("report")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_report)
    p = sub.add_parser("condense")
    common(p)
    p.set_defaults(fn=cmd_condense)
    p = sub.add_parser("partition")
    common(p)
    p.set_defaults(fn=cmd_partition)
    p = sub.add_parser("privacy")
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="100,200,400,800")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--removals", type=int, default=5)
    p.add_argument("--m", type=int, default=5, help="synthetic nodes per class")
    p.add_argument("--epochs", type=int, default=50)
    p.set_defaults(fn=cmd_privacy)
    p = sub.add_parser("import-linqs")
    p.add_argument("--content", required=True)
    p.add_argument("--cites", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_import)
    return ap


def _failing_module(exc: BaseException) -> str:
    mod = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("fedc4."):
            mod = name.split(".", 1)[1]
    return mod


def main(argv=None) -> int:
    level = os.environ.get("FEDC4_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: name the module
        print(f"runtime error in {_failing_module(exc)}: {exc}", file=sys.stderr)
        logger.debug("traceback", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
