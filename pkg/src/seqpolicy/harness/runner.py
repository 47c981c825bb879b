"""Replicated experiments: simulate, fit or run agents, emit metrics.

Every (replication, method) task draws from streams keyed by
``(master_seed, stream_id(replication, tag))``. Environment tags do not
include the method, so all methods in a replication face the same simulated
data. Tasks may run in worker processes; results are merged in task order,
so output files do not depend on the degree of parallelism.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..bandits import make_agent
from ..core import PolicySpec
from ..dtr_direct import bowl_fit, estimate_value_iptw, regime_from_decision_fns, sowl_fit
from ..dtr_indirect import fit_q_backward, greedy_policy_from_q
from ..features import StateFeatures
from ..numerics import RngStream
from ..simulators import SmartConfig, simulate_mrt, simulate_smart, TRACE_COLUMNS
from .config import ExperimentConfig, config_from_dict, dump_config

METRIC_NAMES = ("value_estimate", "cum_regret", "pct_optimal_action", "coef_error")
METRICS_COLUMNS = ("method", "replication", "metric", "value", "step")
TRACE_FILE_COLUMNS = ("method", "replication", *TRACE_COLUMNS)


@dataclass
class TaskResult:
    method: str
    replication: int
    metrics: list = field(default_factory=list)  # (metric, value, step)
    trace: dict | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    out_dir: Path
    results: list
    failures: list

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0

    def metric(self, method: str, metric: str, step=None) -> np.ndarray:
        """Metric values across replications (in replication order)."""
        return np.array([v for r in self.results if r.method == method
                         for (m, v, s) in r.metrics if m == metric and s == step])


# --------------------------------------------------------------------------
# Tasks


def smart_regime(kind: str, params: dict, data, env: SmartConfig) -> tuple[PolicySpec, dict]:
    """Fit one offline method; returns the regime and extra metrics per stage."""
    extra: dict = {}
    cols = env.decision_columns()
    feats = [StateFeatures(env.p, cols[0]), StateFeatures(env.stage2_dim, cols[1])]
    if kind == "behavior":
        return None, extra
    if kind == "q_learning":
        model = fit_q_backward(data, env.feature_maps(), params["ridge_lambda"], params["gamma"])
        return greedy_policy_from_q(model), {"model": model}
    if kind == "bowl":
        return regime_from_decision_fns(bowl_fit(data, params["lam"], feats, n_iter=params["n_iter"])), extra
    if kind == "sowl":
        return regime_from_decision_fns(sowl_fit(data, params["lam"], feats, n_restarts=params["n_restarts"],
                                                 n_iter=params["n_iter"])), extra
    raise ValueError(f"unknown offline method {kind!r}")


def _smart_task(cfg: ExperimentConfig, rep: int, method) -> TaskResult:
    env = cfg.env_config()
    res = TaskResult(method.id, rep)
    train, truth = simulate_smart(env, cfg.n, RngStream.for_task(cfg.master_seed, rep, "smart/train"))
    test, _ = simulate_smart(env, cfg.n_test, RngStream.for_task(cfg.master_seed, rep, "smart/test"))
    policy, extra = smart_regime(method.kind, method.params, train, env)
    if policy is None:
        Y = test.complete_rewards().sum(axis=1)
        res.metrics.append(("value_estimate", float(Y.mean()), None))
        return res
    agree = []
    for t in range(2):
        st = test.stage(t)
        a = policy.actions(t, st.states)
        frac = float(np.mean(a == truth.optimal_regime.actions(t, st.states)))
        agree.append(frac)
        res.metrics.append(("pct_optimal_action", frac, t))
    res.metrics.append(("pct_optimal_action", float(np.mean(agree)), None))
    res.metrics.append(("value_estimate", estimate_value_iptw(test, policy, method.params.get("gamma", 1.0)).point,
                        None))
    if "model" in extra:
        for t, (c, c0) in enumerate(zip(extra["model"].coefs, truth.q_coefs)):
            res.metrics.append(("coef_error", float(np.max(np.abs(c - c0))), t))
    return res


def agent_factory(kind: str, params: dict, env):
    """``factory(user) -> agent`` for :func:`simulate_mrt`."""
    fm = env.feature_map()
    p = dict(params)
    if "lambda_ridge" in p:
        p["lam" if kind in ("linucb", "lints") else "ridge_lambda"] = p.pop("lambda_ridge")
    return lambda user: make_agent(kind, env.n_arms, fm.dim, fm.state_dim, **p)


def _mrt_task(cfg: ExperimentConfig, rep: int, method) -> TaskResult:
    env = cfg.env_config()
    res = TaskResult(method.id, rep)
    out = simulate_mrt(env, agent_factory(method.kind, method.params, env), cfg.n_users,
                       RngStream.for_task(cfg.master_seed, rep, "mrt"), record_dataset=False)
    res.metrics.append(("cum_regret", float(np.mean(out.cum_regret_per_user())), env.horizon))
    res.metrics.append(("pct_optimal_action", out.pct_optimal(), env.horizon))
    if cfg.write_trace:
        res.trace = out.trace
    return res


def run_task(cfg_dict: dict, rep: int, method_index: int) -> TaskResult:
    """Run one (replication, method) task; errors are captured, not raised."""
    cfg = config_from_dict(cfg_dict)
    method = cfg.methods[method_index]
    try:
        task = _smart_task if cfg.scenario == "smart" else _mrt_task
        res = task(cfg, rep, method)
        for name, value, _ in res.metrics:
            if name not in METRIC_NAMES or not math.isfinite(value):
                raise ValueError(f"invalid metric {name}={value}")
        return res
    except Exception as exc:  # recorded per replication; other tasks proceed
        return TaskResult(method.id, rep, error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def _star(args):
    return run_task(*args)


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("SEQPOLICY_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


# --------------------------------------------------------------------------
# Output


def _fmt(v) -> str:
    return "" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))


def write_metrics(results, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in results:
            for name, value, step in r.metrics:
                w.writerow([r.method, r.replication, name, _fmt(float(value)), _fmt(step)])


def write_trace(results, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FILE_COLUMNS)
        for r in results:
            if r.trace is None:
                continue
            tr = r.trace
            reg = tr["regret"].tolist()
            cum = tr["cum_regret"].tolist()
            users = tr["user"].tolist()
            days = tr["day"].tolist()
            arms = tr["chosen_arm"].tolist()
            w.writerows([r.method, r.replication, users[i], days[i], arms[i], repr(reg[i]), repr(cum[i])]
                        for i in range(len(reg)))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None,
                   log=None) -> ExperimentResult:
    """Run every method x replication, write ``metrics.csv``,
    ``regret_trace.csv`` (MRT) and ``manifest.json``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, rep, i) for rep in range(cfg.replications) for i in range(len(cfg.methods))]
    n_workers = workers or worker_count(len(tasks))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_star, tasks))
    else:
        results = [_star(t) for t in tasks]
    failures = [{"method": r.method, "replication": r.replication, "error": r.error.splitlines()[0]}
                for r in results if r.error]
    if log:
        for f in failures:
            log(f"replication {f['replication']} of {f['method']} failed: {f['error']}")
    files = {}
    write_metrics(results, out / "metrics.csv")
    files["metrics.csv"] = _sha256(out / "metrics.csv")
    if cfg.scenario == "mrt" and cfg.write_trace:
        write_trace(results, out / "regret_trace.csv")
        files["regret_trace.csv"] = _sha256(out / "regret_trace.csv")
    (out / "config.yaml").write_text(dump_config(cfg))
    manifest = {
        "config_hash": cfg.hash(),
        "master_seed": cfg.master_seed,
        "replications": cfg.replications,
        "scenario": cfg.scenario,
        "methods": [m.id for m in cfg.methods],
        "stream_tags": ["smart/train", "smart/test"] if cfg.scenario == "smart" else ["mrt"],
        "versions": {"seqpolicy": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": files,
        "failures": failures,
        "status": "failed" if failures else "ok",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(out, results, failures)
