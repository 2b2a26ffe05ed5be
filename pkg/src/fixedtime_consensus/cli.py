"""Command line entry point.

    fixedtime-consensus simulate    --config cfg.json [--out DIR] [--kmax K] [--tol F] [--dense S] [--plot svg|gnuplot|none] [--sweep]
    fixedtime-consensus check-graph --config cfg.json [--out DIR]
    fixedtime-consensus verify      --config cfg.json [--out DIR] [--kmax K]

Exit codes: 0 success, 1 validation error, 2 numeric abort, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import oracle
from .config import ConfigError, ExperimentConfig, load_config
from .control import StateError, discrete_step, interval_limit
from .graph import GraphDimensionError, NotSIAError, consensus_weights, has_directed_spanning_tree
from .output import write_gnuplot, write_json, write_svg, write_trajectory_csv
from .simulator import NumericalAbort, run
from .timeline import PartitionError

log = logging.getLogger("fixedtime_consensus")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_VERIFICATION = 3

RK4_TOL = 1e-6
CONSISTENCY_TOL = 1e-12
CERT_RELATIVE_TOL = 1e-10
CERT_TERMINAL_TOL = 1e-12


def simulate_experiment(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run one experiment and write ``trajectory.csv``, ``report.json`` and the plot."""
    partition = cfg.partition()
    record, report = run(
        cfg.initial,
        cfg.schedule,
        partition,
        cfg.tolerances,
        dense=cfg.dense,
        horizon=cfg.horizon,
        seed=cfg.seed,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(record, out_dir / "trajectory.csv")
    doc = {
        "name": cfg.name,
        "config": cfg.source,
        "partition": partition.to_json(),
        "schedule": cfg.schedule.to_json(),
        "initial": {
            "positions": cfg.initial.positions.tolist(),
            "velocities": cfg.initial.velocities.tolist(),
        },
        "report": report.to_json(),
    }
    write_json(doc, out_dir / "report.json")
    if cfg.plot == "svg":
        write_svg(record, out_dir / "trajectory.svg", partition.settling_time)
    elif cfg.plot == "gnuplot":
        write_gnuplot("trajectory.csv", cfg.initial.dimension, cfg.initial.agent_count, out_dir / "trajectory.gp")
    for w in report.warnings:
        log.warning("%s: %s", cfg.name, w)
    return doc


def analyze_graphs(cfg: ExperimentConfig) -> dict:
    """Spanning tree status of each scheduled graph and of their union, plus consensus weights."""
    schedule = cfg.schedule
    union = schedule.union()
    doc: dict = {
        "mode": schedule.mode,
        "period": schedule.period,
        "graphs": [
            {**g.to_json(), "has_tree": has_directed_spanning_tree(g)} for g in schedule.graphs
        ],
        "union": {**union.to_json(), "has_tree": has_directed_spanning_tree(union)},
    }
    product, limit = oracle.product_over_period(schedule)
    try:
        doc["xi"] = consensus_weights(product).xi.tolist()
        doc["xi_error"] = None
    except NotSIAError as exc:
        doc["xi"] = None
        doc["xi_error"] = str(exc)
    slem = oracle.second_eigenvalue_modulus(product)
    doc["second_eigenvalue_modulus"] = slem
    doc["spectral_gap"] = 1.0 - slem
    doc["product_limit"] = {
        "converged": limit.converged,
        "iterations": limit.iterations,
        "rate": limit.rate,
    }
    return doc


def verify_experiment(cfg: ExperimentConfig) -> dict:
    """Run the oracle suite against the closed-form machinery for one config."""
    partition = cfg.partition()
    schedule = cfg.schedule
    checks = []

    intervals = min(10, partition.k_max)
    rk = oracle.rk4_reference(cfg.initial, schedule, partition, 1000, intervals)
    cf = oracle.closed_form_on_grid(cfg.initial, schedule, partition, 1000, intervals)
    dev = oracle.max_deviation(rk, cf)
    checks.append(
        {"check": "rk4_vs_closed_form", "intervals": intervals, "steps_per_interval": 1000,
         "max_deviation": dev, "tolerance": RK4_TOL, "passed": dev <= RK4_TOL}
    )

    _, report = run(cfg.initial, schedule, partition, cfg.tolerances, dense=0)
    used = report.truncation_k
    state = cfg.initial
    worst = 0.0
    for k in range(used):
        g, interval = schedule.graph_at(k), partition.interval(k)
        nxt = discrete_step(state, g, interval)
        lim = interval_limit(state, g, interval)
        worst = max(worst, float(np.max(np.abs(lim.stacked() - nxt.stacked()))))
        state = nxt
    checks.append(
        {"check": "step_limit_consistency", "intervals": used, "max_deviation": worst,
         "tolerance": CONSISTENCY_TOL, "passed": worst <= CONSISTENCY_TOL}
    )

    certs = oracle.certify_run(cfg.initial, schedule, partition, intervals=used)
    max_dev = max((c.deviation for c in certs), default=0.0)
    max_term = max((c.terminal_error for c in certs), default=0.0)
    checks.append(
        {"check": "minimum_energy_certificate", "certificates": len(certs),
         "max_relative_deviation": max_dev, "max_terminal_error": max_term,
         "relative_tolerance": CERT_RELATIVE_TOL, "terminal_tolerance": CERT_TERMINAL_TOL,
         "passed": all(c.passed(CERT_RELATIVE_TOL, CERT_TERMINAL_TOL) for c in certs)}
    )

    expect = schedule.condition_satisfied()
    _, limit = oracle.product_over_period(schedule)
    entry = {"check": "product_limit", "expect_rank_one": expect, "converged": limit.converged,
             "iterations": limit.iterations, "rate": limit.rate}
    if expect and limit.converged:
        xi = consensus_weights(schedule.period_product()).xi
        gap = float(np.max(np.abs(limit.xi_estimate - xi)))
        entry["xi_difference"] = gap
        entry["passed"] = gap <= 1e-8
    else:
        entry["passed"] = expect == limit.converged
    checks.append(entry)

    ratio = partition.final_instant / partition.settling_time
    basel = 6 / np.pi**2 * float(np.sum(1.0 / np.arange(1, partition.k_max + 1) ** 2))
    checks.append(
        {"check": "partition_sum", "final_over_settling": ratio, "expected": basel,
         "passed": abs(ratio - basel) <= 1e-12 and partition.final_instant < partition.settling_time}
    )
    return {"name": cfg.name, "passed": all(c["passed"] for c in checks), "checks": checks}


def _out_dir(cfg: ExperimentConfig, override: str | None, config_path: str, many: bool) -> Path:
    base = Path(override) if override else Path(cfg.output_dir or "out")
    return base / Path(config_path).stem if many else base


def _load(path: str, args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(path)
    return cfg.with_overrides(
        k_max=getattr(args, "kmax", None),
        stop_tol=getattr(args, "tol", None),
        dense=getattr(args, "dense", None),
        plot=getattr(args, "plot", None),
    )


def _cmd_simulate(args: argparse.Namespace) -> int:
    paths = args.config
    if len(paths) > 1 and not args.sweep:
        raise ConfigError("several configs need --sweep", "--config")
    configs = [_load(p, args) for p in paths]
    jobs = [(cfg, _out_dir(cfg, args.out, p, len(paths) > 1)) for cfg, p in zip(configs, paths)]
    if args.sweep:
        with ThreadPoolExecutor() as pool:
            docs = list(pool.map(lambda job: simulate_experiment(*job), jobs))
    else:
        docs = [simulate_experiment(*job) for job in jobs]
    for doc, (_, out) in zip(docs, jobs):
        rep = doc["report"]
        print(
            f"{doc['name']}: achieved={rep['achieved']} truncation_k={rep['truncation_k']} "
            f"spreads=({rep['residual_at_truncation']['position_spread']:.3e}, "
            f"{rep['residual_at_truncation']['velocity_spread']:.3e}) -> {out}"
        )
    return EXIT_OK


def _cmd_check_graph(args: argparse.Namespace) -> int:
    cfg = _load(args.config[0], args)
    doc = analyze_graphs(cfg)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(doc, Path(args.out) / "graph_analysis.json")
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _load(args.config[0], args)
    doc = verify_experiment(cfg)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(doc, Path(args.out) / "verification.json")
    for c in doc["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}")
    return EXIT_OK if doc["passed"] else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixedtime-consensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", action="append", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--kmax", type=int, metavar="INT")

    sim = sub.add_parser("simulate", help="run an experiment and write CSV/JSON/plot artifacts")
    common(sim)
    sim.add_argument("--tol", type=float, metavar="FLOAT", help="stop tolerance on both spreads")
    sim.add_argument("--dense", type=int, metavar="INT", help="intra-interval samples")
    sim.add_argument("--plot", choices=["svg", "gnuplot", "none"])
    sim.add_argument("--sweep", action="store_true", help="run several configs concurrently")
    sim.set_defaults(func=_cmd_simulate)

    chk = sub.add_parser("check-graph", help="spanning tree and consensus weight analysis")
    common(chk)
    chk.set_defaults(func=_cmd_check_graph)

    ver = sub.add_parser("verify", help="oracle checks: RK4, certificates, product limits")
    common(ver)
    ver.add_argument("--tol", type=float, metavar="FLOAT")
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PartitionError, GraphDimensionError, StateError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalAbort as exc:
        print(f"numeric abort in interval {exc.interval_index}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
