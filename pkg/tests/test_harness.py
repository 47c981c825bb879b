import csv
import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from seqpolicy.errors import ConfigError, ConfigParseError
from seqpolicy.harness import runner
from seqpolicy.harness.cli import main
from seqpolicy.harness.config import METHOD_PARAMS, config_from_dict, dump_config, load_config, parse_config
from seqpolicy.harness.runner import METRIC_NAMES, METRICS_COLUMNS, TRACE_FILE_COLUMNS, run_experiment

MRT_MIN = """
scenario: mrt
methods:
  - kind: lints
"""

SMART_MIN = """
scenario: smart
n: 300
n_test: 500
methods:
  - kind: q_learning
  - kind: behavior
"""


def validate_metrics_csv(path):
    """Schema check for ``metrics.csv``; returns the parsed rows."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRICS_COLUMNS
    out = []
    for r in rows[1:]:
        assert len(r) == len(METRICS_COLUMNS)
        method, rep, metric, value, step = r
        assert method and int(rep) >= 0 and metric in METRIC_NAMES
        assert math.isfinite(float(value))
        assert step == "" or int(step) >= 0
        out.append(r)
    return out


def validate_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_FILE_COLUMNS
    for r in rows[1:]:
        assert len(r) == len(TRACE_FILE_COLUMNS)
        _, rep, user, day, arm, regret, cum = r
        assert int(rep) >= 0 and int(user) >= 0 and int(day) >= 0 and int(arm) >= 0
        assert float(regret) >= 0 and float(cum) >= 0
    return rows[1:]


def _files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


# --------------------------------------------------------------------------
# Config


def test_minimal_mrt_defaults():
    cfg = parse_config(MRT_MIN)
    p = cfg.methods[0].params
    assert p["nu"] == 1.0 and p["lambda_ridge"] == 1.0 and p["burn_in"] == 0
    assert cfg.replications == 1 and cfg.methods[0].id == "lints"
    assert parse_config(SMART_MIN).methods[0].params["gamma"] == 1.0


def test_replications_zero_names_field():
    with pytest.raises(ConfigError) as exc:
        parse_config(MRT_MIN + "replications: 0\n")
    assert any(v.startswith("replications") for v in exc.value.violations)


def test_all_violations_reported():
    text = """
scenario: mrt
replications: 0
master_seed: -1
env: {horizon: 0, bogus: 1}
methods:
  - kind: lints
    params: {nu: -1}
  - kind: q_learning
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = "\n".join(exc.value.violations)
    for needle in ("replications", "master_seed", "env.bogus", "horizon", "params.nu", "q_learning"):
        assert needle in msg


def test_no_methods_rejected():
    with pytest.raises(ConfigError):
        parse_config("scenario: smart\nmethods: []\n")


def test_parse_error_location():
    with pytest.raises(ConfigParseError) as exc:
        parse_config("scenario: mrt\nmethods:\n  - kind: [lints\n")
    assert exc.value.line is not None and exc.value.column is not None


_kinds = st.sampled_from(sorted(METHOD_PARAMS["mrt"]))


@given(_kinds, st.integers(1, 5), st.integers(0, 2 ** 64 - 1), st.floats(0, 5), st.integers(0, 20))
def test_config_round_trip(kind, reps, seed, nu, burn):
    raw = {"scenario": "mrt", "replications": reps, "master_seed": seed,
           "env": {"n_arms": 2, "horizon": 50},
           "methods": [{"kind": kind, "params": {"burn_in": burn, **({"nu": nu} if kind == "lints" else {})}}]}
    cfg = config_from_dict(raw)
    again = parse_config(dump_config(cfg))
    assert again == cfg and dump_config(again) == dump_config(cfg)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SMART_MIN)
    assert load_config(p) == parse_config(SMART_MIN)


# --------------------------------------------------------------------------
# Experiments


def test_smart_experiment_outputs(tmp_path):
    cfg = parse_config(SMART_MIN + "replications: 2\n")
    res = run_experiment(cfg, tmp_path / "a", workers=1)
    assert res.exit_code == 0
    rows = validate_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert {r[0] for r in rows} == {"q_learning", "behavior"}
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.hash() and manifest["master_seed"] == 0
    assert manifest["status"] == "ok" and set(manifest["versions"]) >= {"seqpolicy", "numpy", "scipy", "python"}
    assert yaml.safe_load((tmp_path / "a" / "config.yaml").read_text()) == cfg.to_dict()


def test_experiment_bit_identical_serial_and_parallel(tmp_path):
    cfg = parse_config("scenario: mrt\nreplications: 2\nenv: {horizon: 200}\n"
                       "methods:\n  - kind: lints\n  - kind: uniform\n")
    run_experiment(cfg, tmp_path / "a", workers=1)
    run_experiment(cfg, tmp_path / "b", workers=1)
    run_experiment(cfg, tmp_path / "c", workers=2)
    assert _files(tmp_path / "a") == _files(tmp_path / "b") == _files(tmp_path / "c")
    validate_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert len(validate_trace_csv(tmp_path / "a" / "regret_trace.csv")) == 2 * 2 * 200


def test_seed_changes_output(tmp_path):
    cfg = parse_config(MRT_MIN + "env: {horizon: 100}\n")
    run_experiment(cfg, tmp_path / "a", workers=1)
    run_experiment(cfg.with_seed(1), tmp_path / "b", workers=1)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


def test_failure_recorded_per_replication(tmp_path, monkeypatch):
    real = runner._smart_task

    def flaky(cfg, rep, method):
        if rep == 1:
            raise RuntimeError("boom")
        return real(cfg, rep, method)

    monkeypatch.setattr(runner, "_smart_task", flaky)
    cfg = parse_config(SMART_MIN + "replications: 3\n")
    res = run_experiment(cfg, tmp_path, workers=1)
    assert res.exit_code == 1
    assert {(f["method"], f["replication"]) for f in res.failures} == {("q_learning", 1), ("behavior", 1)}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "failed" and len(manifest["failures"]) == 2
    reps = {int(r[1]) for r in validate_metrics_csv(tmp_path / "metrics.csv")}
    assert reps == {0, 2}


def test_smart_methods_recover_regime(tmp_path):
    cfg = parse_config("scenario: smart\nn: 10000\nn_test: 10000\nmethods:\n"
                       "  - kind: q_learning\n  - kind: bowl\n")
    res = run_experiment(cfg, tmp_path, workers=1)
    assert res.exit_code == 0
    for m in ("q_learning", "bowl"):
        assert res.metric(m, "pct_optimal_action")[0] >= 0.9


def test_mrt_lints_beats_uniform_small(tmp_path):
    # the full T = 10^4, 20-replication version lives in the acceptance suite
    cfg = parse_config("scenario: mrt\nreplications: 5\nwrite_trace: false\n"
                       "env: {horizon: 2000}\nmethods:\n  - kind: uniform\n  - kind: lints\n"
                       "    params: {n_prob_draws: 0}\n")
    res = run_experiment(cfg, tmp_path, workers=1)
    assert np.all(res.metric("lints", "cum_regret", 2000) < res.metric("uniform", "cum_regret", 2000))


# --------------------------------------------------------------------------
# CLI


def test_cli_verbs(tmp_path):
    cfgp = tmp_path / "smart.yaml"
    cfgp.write_text(SMART_MIN)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfgp), "--out", str(out), "--quiet"]) == 0
    assert (out / "dataset.csv").exists() and (out / "truth.yaml").exists()
    assert main(["fit", "--config", str(cfgp), "--out", str(out), "--data", str(out / "dataset.csv"),
                 "--quiet"]) == 0
    assert "q_learning" in yaml.safe_load((out / "models.yaml").read_text())
    assert main(["evaluate", "--config", str(cfgp), "--out", str(out), "--quiet"]) == 0
    est = yaml.safe_load((out / "estimates.yaml").read_text())
    assert {e["method_id"] for e in est} == {"q_learning"}
    assert main(["experiment", "--config", str(cfgp), "--out", str(out / "exp"), "--seed", "3", "--quiet"]) == 0
    assert json.loads((out / "exp" / "manifest.json").read_text())["master_seed"] == 3
    # offline-only and online-only verbs reject the wrong scenario
    assert main(["bandit-run", "--config", str(cfgp), "--quiet"]) == 2


def test_cli_bandit_run(tmp_path):
    cfgp = tmp_path / "mrt.yaml"
    cfgp.write_text(MRT_MIN + "env: {horizon: 50}\n")
    out = tmp_path / "o"
    assert main(["bandit-run", "--config", str(cfgp), "--out", str(out), "--quiet"]) == 0
    validate_trace_csv(out / "regret_trace.csv")
    assert main(["simulate", "--config", str(cfgp), "--out", str(out / "sim"), "--quiet"]) == 0
    assert main(["fit", "--config", str(cfgp), "--quiet"]) == 2


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfgp = tmp_path / "bad.yaml"
    cfgp.write_text("scenario: mrt\nreplications: 0\nmethods: [{kind: lints}]\n")
    assert main(["experiment", "--config", str(cfgp)]) == 2
    assert "replications" in capsys.readouterr().err
