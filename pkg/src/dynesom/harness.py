"""
Experiment runner: configuration, per-step tracking metrics, baseline tuning,
parameter sweeps and file export.

A run builds the network and the dynamic least-squares instance from explicit
seeds, starts every solver from the same perturbed point and records, after
each full step, the coordinate error ``e_t``, the primal-dual distance
``||u_t - u_t*||_G``, the primal distance ``||x_t - x_t*||`` and the drift
``d_t``.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import METHODS, BaselineConfig, BaselineState, baseline_step
from .esom import EsomConfig, esom_init, esom_step, save_checkpoint
from .metrics import (ContractionError, drift_metric, error_metric, fit_contraction,
                      lyapunov_metric, primal_distance)
from .network import SyncNetwork
from .objective import FrozenObjective, estimate_bounds, make_dynamic_least_squares
from .oracle import DENSE_LIMIT, DenseConsensus, optimal_dual, solve_instantaneous_optimum
from .topology import (gamma_smallest_nonzero_eig, generate_random_graph, metropolis_weights,
                       validate_weight_matrix, write_edge_list)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "solver", "e_t", "lyapunov", "primal_err", "drift", "wall_ms")
DIVERGENCE_LIMIT = 1e12
SOLVER_KINDS = ("ESOM",) + METHODS

DEFAULTS = {
    "network": {"n": 20, "r_c": 0.15, "seed": 1},
    "problem": {
        "p": 5,
        "horizon": 1000,
        "change_period": 100,
        "trajectory_scale": 1.0,
        "noise_std": 1.0,
        "noise": "projected",
        "redraw_noise": False,
        "sine_period": 500,
        "seed": 1,
    },
    "init": {"radius": 100.0, "seed": 0},
    "metrics": {"lyapunov": True, "timing": False, "node_trace": True, "burn_in": 0.2},
    "tuning": {
        "steps": 100,
        "EXTRA": [float(s) for s in np.logspace(-3, 0, 13)],
        "NN0": [float(s) for s in np.logspace(-3, 1, 17)],
        "DGD": [float(s) for s in np.logspace(-3, 0, 13)],
    },
    "run": {"workers": 1},
    "solvers": {
        "ESOM-0": {"method": "ESOM", "alpha": 1.0, "epsilon": 1.0, "K": 0},
        "ESOM-2": {"method": "ESOM", "alpha": 1.0, "epsilon": 1.0, "K": 2},
        "EXTRA": {"method": "EXTRA", "step_size": "auto"},
        "NN-0": {"method": "NN0", "step_size": "auto"},
    },
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SolverSpec:
    """One solver entry: ESOM with ``(alpha, epsilon, K)`` or a baseline.

    ``step_size=None`` asks for tuning on the static version of the instance.
    """

    name: str
    method: str
    alpha: float = 1.0
    epsilon: float = 1.0
    K: int = 0
    step_size: float | None = None

    @property
    def is_esom(self):
        return self.method == "ESOM"

    def esom_config(self):
        return EsomConfig(self.alpha, self.epsilon, self.K)

    @classmethod
    def from_entry(cls, name, entry):
        entry = dict(entry)
        method = entry.pop("method", None)
        if method not in SOLVER_KINDS:
            raise ConfigError(f"solver {name!r}: method must be one of {SOLVER_KINDS}, "
                              f"got {method!r}")
        if method == "ESOM":
            allowed = {"alpha", "epsilon", "K"}
        else:
            allowed = {"step_size"}
        extra = set(entry) - allowed
        if extra:
            raise ConfigError(f"solver {name!r}: unknown keys {sorted(extra)}")
        if method == "ESOM":
            spec = cls(name, method, float(entry.get("alpha", 1.0)),
                       float(entry.get("epsilon", 1.0)), entry.get("K", 0))
            try:
                spec.esom_config()
            except ValueError as exc:
                raise ConfigError(f"solver {name!r}: {exc}") from None
            return cls(name, method, spec.alpha, spec.epsilon, int(spec.K))
        step = entry.get("step_size", "auto")
        if step == "auto":
            return cls(name, method, step_size=None)
        if isinstance(step, bool) or not isinstance(step, (int, float)) or not step > 0:
            raise ConfigError(f"solver {name!r}: step_size must be positive or 'auto'")
        return cls(name, method, step_size=float(step))


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if key == "solvers" and not path:
            if not isinstance(val, dict) or not val:
                raise ConfigError("'solvers' must be a non-empty table")
            out[key] = copy.deepcopy(val)
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _require_int(value, name, low):
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ConfigError(f"{name} must be an integer >= {low}, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    """Fully resolved experiment settings (every field has a default).

    The nested layout mirrors the TOML file: ``[network]``, ``[problem]``,
    ``[init]``, ``[metrics]``, ``[tuning]``, ``[run]`` and one
    ``[solvers.<name>]`` table per solver.
    """

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self._check()

    @classmethod
    def from_dict(cls, d):
        return cls(_merge(DEFAULTS, d or {}))

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def _check(self):
        net, prob, init = self.data["network"], self.data["problem"], self.data["init"]
        _require_int(net["n"], "network.n", 2)
        _require_int(net["seed"], "network.seed", 0)
        if not 0 < float(net["r_c"]) <= 1:
            raise ConfigError(f"network.r_c must be in (0, 1], got {net['r_c']}")
        for key in ("p", "horizon", "change_period", "sine_period"):
            _require_int(prob[key], f"problem.{key}", 1)
        _require_int(prob["seed"], "problem.seed", 0)
        _require_int(init["seed"], "init.seed", 0)
        if prob["noise"] not in ("projected", "raw"):
            raise ConfigError(f"problem.noise must be 'projected' or 'raw', got {prob['noise']!r}")
        if float(prob["noise_std"]) < 0:
            raise ConfigError("problem.noise_std must be nonnegative")
        if not 0 <= float(self.data["metrics"]["burn_in"]) < 1:
            raise ConfigError("metrics.burn_in must be in [0, 1)")
        _require_int(self.data["tuning"]["steps"], "tuning.steps", 1)
        _require_int(self.data["run"]["workers"], "run.workers", 1)
        self.solvers()

    def solvers(self):
        return [SolverSpec.from_entry(name, entry)
                for name, entry in self.data["solvers"].items()]

    def select(self, names):
        """Copy restricted to `names` (in the given order)."""
        known = self.data["solvers"]
        missing = [nm for nm in names if nm not in known]
        if missing:
            raise ConfigError(f"unknown solvers {missing}; configured: {list(known)}")
        d = self.to_dict()
        d["solvers"] = {nm: known[nm] for nm in names}
        return ExperimentConfig(d)

    def with_seed(self, seed):
        """Copy with the network, problem and initialization seeds all set to `seed`."""
        d = self.to_dict()
        for section in ("network", "problem", "init"):
            d[section]["seed"] = int(seed)
        return ExperimentConfig(d)

    def __getitem__(self, key):
        return self.data[key]


# --------------------------------------------------------------------------
# setup

@dataclass
class ExperimentSetup:
    topology: object
    weights: object
    objective: object
    x0: np.ndarray
    consensus: DenseConsensus | None
    gamma: float


def initial_point(center, n, radius, seed):
    """``center + radius * u_i`` with ``u_i`` independent uniform unit vectors."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    u = rng.standard_normal((n, center.size))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return center + radius * u


def build_setup(cfg, objective=None, topology=None):
    """Network, weights, objective and starting point for a config.

    `objective` and `topology` override the seeded construction (replay).
    """
    net, prob = cfg["network"], cfg["problem"]
    g = topology or generate_random_graph(net["n"], float(net["r_c"]), net["seed"])
    W = metropolis_weights(g)
    obj = objective or make_dynamic_least_squares(
        g.n, prob["p"], prob["horizon"], change_period=prob["change_period"],
        trajectory_scale=float(prob["trajectory_scale"]), seed=prob["seed"],
        noise_std=float(prob["noise_std"]), noise=prob["noise"],
        redraw_noise=bool(prob["redraw_noise"]), sine_period=prob["sine_period"])
    if obj.n != g.n:
        raise ConfigError(f"objective has {obj.n} nodes but the graph has {g.n}")
    x_tilde0 = solve_instantaneous_optimum(obj, 0)
    x0 = initial_point(x_tilde0, g.n, float(cfg["init"]["radius"]), cfg["init"]["seed"])
    dense_ok = g.n * obj.p <= DENSE_LIMIT
    consensus = DenseConsensus(W, obj.p) if dense_ok else None
    return ExperimentSetup(g, W, obj, x0, consensus, gamma_smallest_nonzero_eig(W))


class OptimaCache:
    """Instantaneous optima, KKT duals and optimal gradients, shared across solvers."""

    def __init__(self, setup, with_dual=True):
        self.setup = setup
        self.with_dual = with_dual and setup.consensus is not None
        self._cache = {}

    def _key(self, t):
        obj = self.setup.objective
        return obj.epoch(t) if hasattr(obj, "epoch") else t

    def get(self, t):
        key = self._key(t)
        if key not in self._cache:
            obj = self.setup.objective
            x_tilde = solve_instantaneous_optimum(obj, t)
            x_star = np.tile(x_tilde, (obj.n, 1))
            v_star = None
            if self.with_dual:
                v_star, _ = optimal_dual(obj, self.setup.consensus, x_star, t)
            grad = obj.stacked_gradient(t, x_star)
            self._cache[key] = (x_tilde, x_star, v_star, grad)
        return self._cache[key]


# --------------------------------------------------------------------------
# records

@dataclass
class TrajectoryRecord:
    """Per-step metrics of one solver; arrays are indexed by step ``t = 1..T``.

    Metrics that do not apply to a solver (primal-dual quantities for the
    baselines) or were switched off are NaN.
    """

    solver: str
    t: np.ndarray
    e: np.ndarray
    lyapunov: np.ndarray
    lyapunov_prev: np.ndarray
    primal_err: np.ndarray
    drift: np.ndarray
    wall_ms: np.ndarray
    trace: np.ndarray | None = None
    status: str = "ok"
    message: str = ""
    hyper: dict = field(default_factory=dict)
    final_state: object = None

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls, solver, horizon, n, trace):
        nan = np.full(horizon, np.nan)
        return cls(solver, np.arange(1, horizon + 1), nan.copy(), nan.copy(), nan.copy(),
                   nan.copy(), nan.copy(), nan.copy(),
                   np.full((horizon, n), np.nan) if trace else None)

    def truncate(self, length):
        for name in ("t", "e", "lyapunov", "lyapunov_prev", "primal_err", "drift", "wall_ms"):
            setattr(self, name, getattr(self, name)[:length])
        if self.trace is not None:
            self.trace = self.trace[:length]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    setup: ExperimentSetup
    records: dict
    metadata: dict


# --------------------------------------------------------------------------
# solver loops

def _run_baseline(spec, step_size, setup, optima, horizon, metrics, objective=None):
    obj = objective or setup.objective
    n = setup.topology.n
    rec = TrajectoryRecord.empty(spec.name, horizon, n, metrics.get("node_trace", False))
    net = SyncNetwork(setup.topology)
    cfg = BaselineConfig(spec.method, step_size)
    state = BaselineState.initial(setup.x0)
    timing = metrics.get("timing", False)
    for k in range(horizon):
        t = k + 1
        tic = time.perf_counter()
        try:
            state = baseline_step(obj, setup.weights, cfg, state, t, net)
        except np.linalg.LinAlgError as exc:
            rec.status, rec.message = "failed", f"t={t}: {exc}"
            rec.truncate(k)
            break
        if timing:
            rec.wall_ms[k] = 1e3 * (time.perf_counter() - tic)
        x_tilde, x_star, _, _ = optima.get(t)
        rec.e[k] = error_metric(state.x, x_tilde)
        rec.primal_err[k] = primal_distance(state.x, x_star)
        if rec.trace is not None:
            rec.trace[k] = state.x[:, 0]
        if not (rec.e[k] <= DIVERGENCE_LIMIT):
            rec.status, rec.message = "diverged", f"error {rec.e[k]:.3g} at t={t}"
            rec.truncate(k + 1)
            break
    rec.final_state = state
    return rec


def _run_esom(spec, setup, optima, horizon, metrics, objective=None):
    obj = objective or setup.objective
    cfg = spec.esom_config()
    a, eps = cfg.alpha, cfg.epsilon
    n = setup.topology.n
    rec = TrajectoryRecord.empty(spec.name, horizon, n, metrics.get("node_trace", False))
    net = SyncNetwork(setup.topology)
    state = esom_init(setup.x0, net)
    use_dual = metrics.get("lyapunov", True) and optima.with_dual
    timing = metrics.get("timing", False)
    v = np.zeros_like(setup.x0)
    _, x_star_prev, _, grad_prev = optima.get(0)
    for k in range(horizon):
        t = k + 1
        x_tilde, x_star, v_star, grad = optima.get(t)
        if use_dual:
            rec.lyapunov_prev[k] = lyapunov_metric(state.x, v, x_star, v_star, a, eps)
        rec.drift[k] = drift_metric(x_star_prev, x_star, grad_prev, grad, a, eps, setup.gamma)
        tic = time.perf_counter()
        try:
            state = esom_step(obj, setup.weights, cfg, state, t, net)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            rec.status, rec.message = "failed", f"t={t}: {exc}"
            rec.truncate(k)
            break
        if timing:
            rec.wall_ms[k] = 1e3 * (time.perf_counter() - tic)
        rec.e[k] = error_metric(state.x, x_tilde)
        rec.primal_err[k] = primal_distance(state.x, x_star)
        if use_dual:
            v = setup.consensus.recover_dual(state.q)
            rec.lyapunov[k] = lyapunov_metric(state.x, v, x_star, v_star, a, eps)
        if rec.trace is not None:
            rec.trace[k] = state.x[:, 0]
        x_star_prev, grad_prev = x_star, grad
        if not (rec.e[k] <= DIVERGENCE_LIMIT):
            rec.status, rec.message = "diverged", f"error {rec.e[k]:.3g} at t={t}"
            rec.truncate(k + 1)
            break
    rec.final_state = state
    return rec


def tune_baseline(method, grid, setup, steps, t0=0):
    """Pick the grid value with the smallest final error on the problem frozen at `t0`.

    Returns ``(best, table)`` where `table` lists ``(value, final_error)``;
    diverging values score ``inf``. Ties go to the smaller value.
    """
    frozen = FrozenObjective(setup.objective, t0)
    optima = OptimaCache(ExperimentSetup(setup.topology, setup.weights, frozen, setup.x0,
                                         setup.consensus, setup.gamma), with_dual=False)
    table = []
    for value in grid:
        spec = SolverSpec(method, method, step_size=float(value))
        with np.errstate(over="ignore", invalid="ignore"):
            rec = _run_baseline(spec, float(value), setup, optima, steps, {}, frozen)
        final = float(rec.e[-1]) if rec.status == "ok" else math.inf
        table.append((float(value), final if np.isfinite(final) else math.inf))
    best = min(table, key=lambda row: (row[1], row[0]))
    if not np.isfinite(best[1]):
        raise RuntimeError(f"every {method} tuning value diverged")
    return best[0], table


def run_solver(spec, setup, optima, cfg, tuned=None):
    horizon = setup.objective.horizon
    metrics = cfg["metrics"]
    if spec.is_esom:
        rec = _run_esom(spec, setup, optima, horizon, metrics)
        rec.hyper = {"method": "ESOM", "alpha": spec.alpha, "epsilon": spec.epsilon,
                     "K": spec.K}
        return rec
    step = spec.step_size
    hyper = {"method": spec.method, "tuned": step is None}
    if step is None:
        step, table = tuned if tuned is not None else tune_baseline(
            spec.method, cfg["tuning"][spec.method], setup, cfg["tuning"]["steps"])
        hyper["tuning_table"] = [[s, None if math.isinf(e) else e] for s, e in table]
    hyper["step_size"] = step
    rec = _run_baseline(spec, step, setup, optima, horizon, metrics)
    rec.hyper = hyper
    return rec


def run_experiment(cfg, setup=None):
    """Run every configured solver; deterministic for a fixed config.

    Solver failures are recorded in the record status and do not stop the
    other solvers.
    """
    setup = setup or build_setup(cfg)
    optima = OptimaCache(setup, with_dual=cfg["metrics"]["lyapunov"])
    for t in range(setup.objective.horizon + 1):
        optima.get(t)
    specs = cfg.solvers()

    def job(spec):
        log.info("running %s", spec.name)
        with np.errstate(over="ignore", invalid="ignore"):
            return run_solver(spec, setup, optima, cfg)

    workers = cfg["run"]["workers"]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            recs = list(pool.map(job, specs))
    else:
        recs = [job(s) for s in specs]
    records = {r.solver: r for r in recs}
    return ExperimentResult(cfg, setup, records, build_metadata(cfg, setup, records))


def build_metadata(cfg, setup, records):
    from . import __version__

    obj = setup.objective
    report = validate_weight_matrix(setup.weights, setup.topology)
    sample = sorted({0, *range(0, obj.horizon + 1, getattr(obj, "change_period", 1))})
    m, M, L = estimate_bounds(obj, sample[:50])
    return {
        "package": "dynesom",
        "version": __version__,
        "config": cfg.to_dict(),
        "network": {"n": setup.topology.n, "edges": len(setup.topology.edges),
                    "gamma": setup.gamma, "weights_valid": report.passed},
        "objective": {"p": obj.p, "horizon": obj.horizon, "m": m, "M": M, "L": L},
        "solvers": {name: {**rec.hyper, "status": rec.status, "message": rec.message,
                           "steps": len(rec)}
                    for name, rec in records.items()},
    }


# --------------------------------------------------------------------------
# static analysis and sweeps

def static_lyapunov_series(setup, esom_config, steps=2000, floor=1e-10, t0=0):
    """``||u_t - u*||_G`` for ``t = 0..`` of ESOM on the problem frozen at `t0`.

    Stops early once the distance drops below `floor`.
    """
    if setup.consensus is None:
        raise RuntimeError("static Lyapunov series needs the dense oracle (n p too large)")
    frozen = FrozenObjective(setup.objective, t0)
    x_tilde = solve_instantaneous_optimum(frozen, t0)
    x_star = np.tile(x_tilde, (frozen.n, 1))
    v_star, _ = optimal_dual(frozen, setup.consensus, x_star, t0)
    a, eps = esom_config.alpha, esom_config.epsilon
    state = esom_init(setup.x0)
    v = np.zeros_like(setup.x0)
    series = [lyapunov_metric(state.x, v, x_star, v_star, a, eps)]
    for t in range(1, steps + 1):
        state = esom_step(frozen, setup.weights, esom_config, state, t)
        v = setup.consensus.recover_dual(state.q)
        series.append(lyapunov_metric(state.x, v, x_star, v_star, a, eps))
        if not series[-1] > floor:
            break
    return np.array(series)


def steps_to_tolerance(series, tol):
    hits = np.flatnonzero(np.asarray(series) < tol)
    return int(hits[0]) if hits.size else None


def sweep(cfg, alphas, epsilons, Ks, steps=2000, tol=1e-8, dynamic=True, setup=None):
    """Grid over ESOM ``(alpha, epsilon, K)`` plus the baseline tuning grids.

    ESOM rows report static steps to `tol`, the fitted contraction estimate
    and (when `dynamic`) the post-burn-in mean ``e_t`` and the number of
    steps where ``||u_t - u_t*||_G`` failed to drop below
    ``||u_{t-1} - u_t*||_G``. Baseline rows report the static final error
    used for tuning.
    """
    setup = setup or build_setup(cfg)
    optima = OptimaCache(setup)
    burn = int(cfg["metrics"]["burn_in"] * setup.objective.horizon)
    rows = []
    for a in alphas:
        for eps in epsilons:
            for K in Ks:
                spec = SolverSpec(f"ESOM-{K}", "ESOM", float(a), float(eps), int(K))
                with np.errstate(over="ignore", invalid="ignore"):
                    series = static_lyapunov_series(setup, spec.esom_config(), steps)
                try:
                    delta = fit_contraction(series)
                except ContractionError:
                    delta = math.nan
                row = {"solver": "ESOM", "alpha": float(a), "epsilon": float(eps), "K": int(K),
                       "step_size": math.nan, "static_final": float(series[-1]),
                       "steps_to_tol": steps_to_tolerance(series, tol), "delta_hat": delta,
                       "dynamic_mean_e": math.nan, "violations": None}
                if dynamic:
                    with np.errstate(over="ignore", invalid="ignore"):
                        rec = run_solver(spec, setup, optima, cfg)
                    row["dynamic_mean_e"] = post_burn_in_mean(rec, burn)
                    row["violations"] = len(contraction_violations(rec))
                rows.append(row)
    for method in METHODS:
        for value, final in tune_baseline(method, cfg["tuning"][method], setup,
                                          cfg["tuning"]["steps"])[1]:
            rows.append({"solver": method, "alpha": math.nan, "epsilon": math.nan, "K": None,
                         "step_size": value, "static_final": final, "steps_to_tol": None,
                         "delta_hat": math.nan, "dynamic_mean_e": math.nan,
                         "violations": None})
    return rows


SWEEP_HEADER = ("solver", "alpha", "epsilon", "K", "step_size", "static_final",
                "steps_to_tol", "delta_hat", "dynamic_mean_e", "violations")


def write_sweep_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in SWEEP_HEADER])


# --------------------------------------------------------------------------
# trajectory analysis

def post_burn_in_mean(rec, burn_in_steps):
    e = rec.e[burn_in_steps:]
    return float(np.mean(e)) if e.size else math.nan


def contraction_violations(rec, threshold=1e-8):
    """Steps ``t`` with ``||u_{t-1} - u_t*||_G > threshold`` where the step did not contract."""
    prev, cur = rec.lyapunov_prev, rec.lyapunov
    mask = (prev > threshold) & ~(cur < prev)
    return [int(t) for t in rec.t[mask]]


def epoch_windows(horizon, change_period, start=0):
    """``(first, last)`` steps of every complete epoch beginning at or after `start`."""
    out = []
    first = ((start + change_period - 1) // change_period) * change_period
    while first + change_period - 1 <= horizon:
        out.append((max(first, 1), first + change_period - 1))
        first += change_period
    return out


def plateau_change(rec, window, span=50):
    """Relative change of ``e_t`` over the last `span` steps of an epoch."""
    e = dict(zip(rec.t.tolist(), rec.e.tolist()))
    last = e[window[1]]
    return abs(last - e[window[1] - span]) / last


def geometric_decay(rec, window, skip=5, floor=1e-12):
    """Fitted per-step log10 slope of ``e_t`` inside an epoch and its end-to-start ratio.

    The first `skip` steps after the change are ignored and values below
    `floor` are dropped.
    """
    lo, hi = window[0] + skip, window[1]
    sel = (rec.t >= lo) & (rec.t <= hi) & (rec.e > floor)
    t, e = rec.t[sel], rec.e[sel]
    if t.size < 3:
        return math.nan, math.nan
    slope = float(np.polyfit(t, np.log10(e), 1)[0])
    return slope, float(e[-1] / e[0])


# --------------------------------------------------------------------------
# export

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def export_csv(records, path, timing=False):
    """Write ``t,solver,e_t,lyapunov,primal_err,drift,wall_ms`` rows (UTF-8, LF).

    Floats use the shortest round-tripping representation; metrics that do
    not apply are left empty. ``wall_ms`` is only filled when `timing` is set
    so that reruns stay byte-identical.
    """
    records = records.values() if isinstance(records, dict) else records
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            for k in range(len(rec)):
                w.writerow([int(rec.t[k]), rec.solver, _fmt(rec.e[k]), _fmt(rec.lyapunov[k]),
                            _fmt(rec.primal_err[k]), _fmt(rec.drift[k]),
                            _fmt(rec.wall_ms[k]) if timing else ""])


def read_csv(path):
    """Parse an exported trajectory CSV into ``{solver: {column: ndarray}}``."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            cols = out.setdefault(row[1], {k: [] for k in CSV_HEADER if k != "solver"})
            cols["t"].append(int(row[0]))
            for key, val in zip(CSV_HEADER[2:], row[2:]):
                cols[key].append(float(val) if val else math.nan)
    return {s: {k: np.array(v) for k, v in cols.items()} for s, cols in out.items()}


def _json_list(a):
    return [None if math.isnan(x) else x for x in np.asarray(a, dtype=float).tolist()]


def emit_plot_data(records, path):
    """JSON with one series group per solver, ready for an external plotter."""
    records = records.values() if isinstance(records, dict) else records
    data = {"solvers": {rec.solver: {"t": rec.t.tolist(), "e_t": _json_list(rec.e),
                                     "lyapunov": _json_list(rec.lyapunov),
                                     "primal_err": _json_list(rec.primal_err),
                                     "drift": _json_list(rec.drift),
                                     "status": rec.status}
                        for rec in records}}
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def write_node_trace(records, path, objective):
    """First coordinate of every node's iterate, plus the target's, per step and solver."""
    records = [r for r in (records.values() if isinstance(records, dict) else records)
               if r.trace is not None]
    n = records[0].trace.shape[1] if records else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "solver", "target"] + [f"node_{i}" for i in range(n)])
        for rec in records:
            for k in range(len(rec)):
                t = int(rec.t[k])
                target = solve_instantaneous_optimum(objective, t)[0]
                w.writerow([t, rec.solver, _fmt(target)] + [_fmt(x) for x in rec.trace[k]])


OUTPUT_FILES = ("trajectory.csv", "plot_data.json", "node_trace.csv", "metadata.json",
                "instance.npz", "graph.txt", "weights.csv")


def write_outputs(result, out_dir):
    """Write every run artifact into `out_dir` (created if needed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, setup = result.config, result.setup
    export_csv(result.records, out / "trajectory.csv", timing=cfg["metrics"]["timing"])
    emit_plot_data(result.records, out / "plot_data.json")
    if cfg["metrics"]["node_trace"]:
        write_node_trace(result.records, out / "node_trace.csv", setup.objective)
    if hasattr(setup.objective, "save"):
        setup.objective.save(out / "instance.npz")
    write_edge_list(setup.topology, out / "graph.txt")
    setup.weights.to_csv(out / "weights.csv")
    for name, rec in result.records.items():
        if rec.hyper.get("method") == "ESOM" and rec.final_state is not None:
            save_checkpoint(rec.final_state, out / f"checkpoint_{name}.bin")
    (out / "metadata.json").write_text(json.dumps(result.metadata, indent=2)
                                       + "\n", encoding="utf-8")
    return out
