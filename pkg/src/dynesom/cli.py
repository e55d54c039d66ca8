"""
Command-line entry point: ``run``, ``validate``, ``sweep`` and ``replay``.

Failures print one JSON object on stderr, for example
``{"status": "error", "kind": "ConfigError", "message": "..."}``, and exit
with code 2 (bad input) or 1 (runtime failure).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .harness import (ConfigError, ExperimentConfig, build_setup, run_experiment, sweep,
                      write_outputs, write_sweep_csv)
from .objective import DynamicLeastSquares, ObjectiveError, estimate_bounds
from .oracle import optimal_dual, solve_instantaneous_optimum
from .topology import TopologyError, read_edge_list, validate_weight_matrix

EXIT_RUNTIME = 1
EXIT_INPUT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _load_config(args):
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if getattr(args, "solvers", None):
        cfg = cfg.select(args.solvers)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _summary(result):
    burn = int(result.config["metrics"]["burn_in"] * result.setup.objective.horizon)
    rows = {}
    for name, rec in result.records.items():
        tail = rec.e[burn:]
        rows[name] = {"status": rec.status,
                      "mean_e_t": float(np.mean(tail)) if tail.size else None,
                      "final_e_t": float(rec.e[-1]) if len(rec) else None}
    return rows


def cmd_run(args):
    cfg = _load_config(args)
    result = run_experiment(cfg)
    out = write_outputs(result, args.out)
    print(json.dumps({"status": "ok", "out": str(out), "solvers": _summary(result)}))
    return 0


def cmd_validate(args):
    cfg = _load_config(args)
    setup = build_setup(cfg)
    obj, W, g = setup.objective, setup.weights, setup.topology
    report = validate_weight_matrix(W, g)
    changes = sorted({0, *range(obj.change_period, obj.horizon + 1, obj.change_period)})
    m, M, L = estimate_bounds(obj, changes[:50])
    kkt = []
    for t in changes:
        x_tilde = solve_instantaneous_optimum(obj, t)
        entry = {"t": t, "target_gap": float(np.max(np.abs(x_tilde - obj.target(t))))}
        if setup.consensus is not None:
            _, entry["dual_residual"] = optimal_dual(obj, setup.consensus,
                                                     np.tile(x_tilde, (g.n, 1)), t)
        kkt.append(entry)
    checks = {
        "connected": g.is_connected(),
        "weights": report.passed,
        "strongly_convex": m > 0,
        "targets_exact": all(k["target_gap"] < 1e-10 for k in kkt),
        "dual_residual": all(k.get("dual_residual", 0.0) < 1e-9 for k in kkt),
    }
    out = {"status": "ok" if all(checks.values()) else "failed", "checks": checks,
           "weight_failures": report.failures(), "gamma": setup.gamma,
           "bounds": {"m": m, "M": M, "L": L}, "change_points": kkt}
    print(json.dumps(out))
    if not all(checks.values()):
        failed = [k for k, ok in checks.items() if not ok]
        raise RuntimeError(f"validation failed: {failed}")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    rows = sweep(cfg, args.alpha, args.epsilon, args.K, steps=args.steps,
                 dynamic=not args.static_only)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    print(json.dumps({"status": "ok", "out": str(out / "sweep.csv"), "rows": len(rows)}))
    return 0


def cmd_replay(args):
    if args.run:
        run_dir = Path(args.run)
        try:
            meta = json.loads((run_dir / "metadata.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {run_dir / 'metadata.json'}: {exc}") from None
        cfg = ExperimentConfig.from_dict(meta["config"])
        instance, graph = run_dir / "instance.npz", run_dir / "graph.txt"
    else:
        if not (args.instance and args.graph):
            raise UsageError("replay needs --run DIR or both --instance and --graph")
        cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
        instance, graph = Path(args.instance), Path(args.graph)
    if args.solvers:
        cfg = cfg.select(args.solvers)
    obj = DynamicLeastSquares.load(instance)
    topology = read_edge_list(graph)
    d = cfg.to_dict()
    d["network"]["n"] = topology.n
    d["problem"].update(p=obj.p, horizon=obj.horizon, change_period=obj.change_period)
    cfg = ExperimentConfig(d)
    result = run_experiment(cfg, build_setup(cfg, objective=obj, topology=topology))
    out = write_outputs(result, args.out)
    print(json.dumps({"status": "ok", "out": str(out), "solvers": _summary(result)}))
    return 0


def build_parser():
    p = _Parser(prog="dynesom", description=__doc__.strip().splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the configured solvers and export trajectories")
    run.add_argument("--config", help="TOML config (defaults when omitted)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--solvers", type=_names, help="comma-separated subset of solver names")
    run.add_argument("--seed", type=int, help="override network, problem and init seeds")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check topology, weights and problem instance")
    val.add_argument("--config")
    val.add_argument("--seed", type=int)
    val.set_defaults(func=cmd_validate)

    sw = sub.add_parser("sweep", help="grid over alpha, epsilon, K and baseline steps")
    sw.add_argument("--config")
    sw.add_argument("--out", required=True)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--alpha", type=_floats, default=[1.0, 3.0, 5.0])
    sw.add_argument("--epsilon", type=_floats, default=[1.0, 0.1, 0.01])
    sw.add_argument("--K", type=_ints, default=[0, 2])
    sw.add_argument("--steps", type=int, default=2000, help="static steps per ESOM setting")
    sw.add_argument("--static-only", action="store_true", help="skip the dynamic runs")
    sw.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("replay", help="rerun from a serialized instance and graph")
    rp.add_argument("--run", help="directory written by 'run' (uses its metadata config)")
    rp.add_argument("--instance", help="instance .npz bundle")
    rp.add_argument("--graph", help="edge-list file")
    rp.add_argument("--config", help="TOML config used with --instance/--graph")
    rp.add_argument("--solvers", type=_names)
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_replay)
    return p


def _fail(kind, message, code):
    print(json.dumps({"status": "error", "kind": kind, "message": str(message)}),
          file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_INPUT)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, TopologyError, ObjectiveError, FileNotFoundError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_INPUT)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        return _fail(type(exc).__name__, exc, EXIT_RUNTIME)


if __name__ == "__main__":
    raise SystemExit(main())
