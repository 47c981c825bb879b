import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from seqpolicy.bandits import LinUCBAgent
from seqpolicy.core import MISSING, ConstantPolicy, CyclicPolicy, FixedProbPolicy, StageRecord, Trajectory
from seqpolicy.errors import ConfigError, SchemaError
from seqpolicy.numerics import RngStream
from seqpolicy.simulators import (TRACE_COLUMNS, MrtConfig, RecoveryContext, SmartConfig, apply_locf,
                                  expected_max_affine, simulate_mrt, simulate_smart,
                                  update_recovery_context, write_regret_trace)


@pytest.mark.parametrize("z, action, expected", [
    ([3, 5], 0, (0, 6)),
    ([3, 7], 0, (0, 7)),
    ([0, 0], 1, (1, 0)),
])
def test_recovery_update_examples(z, action, expected):
    assert update_recovery_context(z, action, 7).z == expected


def test_recovery_update_out_of_range():
    with pytest.raises(IndexError):
        update_recovery_context([1, 2], 2, 7)


@given(st.integers(1, 10), st.lists(st.integers(0, 4), min_size=1, max_size=50))
def test_recovery_invariants(z_max, actions):
    ctx = RecoveryContext.rested(5, z_max)
    for a in actions:
        ctx = update_recovery_context(ctx, a)
        assert ctx.z.count(0) == 1 and ctx.z[a] == 0
        assert max(ctx.z) <= z_max
    assert np.all(ctx.z_bar >= 0)


def _traj(rewards):
    return Trajectory(tuple(StageRecord([0.0], 0, y, 0.5) for y in rewards))


@pytest.mark.parametrize("rewards, expected", [
    ([1.0, MISSING, MISSING, 4.0], [1.0, 1.0, 1.0, 4.0]),
    ([1.0, 2.0], [1.0, 2.0]),
    ([MISSING, 2.0], [0.0, 2.0]),
])
def test_locf(rewards, expected):
    assert apply_locf(_traj(rewards)).rewards == expected


# --------------------------------------------------------------------------
# SMART


def test_smart_all_responders():
    cfg = SmartConfig(responder_threshold=-np.inf)
    data, truth = simulate_smart(cfg, 1000, RngStream(0))
    assert np.all(data.stage(1).states[:, cfg.p + 1] == 1.0)
    assert truth.responder_prob == 1.0


def test_smart_symmetric_arms_null():
    cfg = SmartConfig(stage1_coefs=((1.0, 1.0), (1.0, 1.0)))
    data, _ = simulate_smart(cfg, 10_000, RngStream(1))
    st0 = data.stage(0)
    y, a = st0.rewards, st0.actions
    sd = y.std()
    assert abs(y[a == 1].mean() - y[a == 0].mean()) <= 3 * sd / np.sqrt(10_000 / 2)


def test_smart_responder_fraction():
    cfg = SmartConfig()
    data, truth = simulate_smart(cfg, 10_000, RngStream(2))
    frac = data.stage(1).states[:, cfg.p + 1].mean()
    # independent oracle: per arm P(N(c0, c1^2 + sd^2) >= threshold)
    oracle = 0.5 * norm.sf((1.0 - 1.0) / np.sqrt(1 + 0.25)) * 2
    assert truth.responder_prob == pytest.approx(oracle, abs=1e-12)
    assert abs(frac - oracle) <= 0.02


def test_smart_behavior_probs_audit():
    cfg = SmartConfig(stage1_probs=(0.3, 0.7), stage2_probs_responders=(0.2, 0.8),
                      stage2_probs_nonresponders=(0.6, 0.4))
    data, _ = simulate_smart(cfg, 500, RngStream(3))
    s0, s1 = data.stage(0), data.stage(1)
    assert np.array_equal(s0.behavior_prob, np.array([0.3, 0.7])[s0.actions])
    r = s1.states[:, cfg.p + 1] == 1.0
    expected = np.where(r, np.array([0.2, 0.8])[s1.actions], np.array([0.6, 0.4])[s1.actions])
    assert np.array_equal(s1.behavior_prob, expected)


def test_smart_observational_probs_audit():
    cfg = SmartConfig(stage1_logits=((0.0, 0.0), (0.5, 2.0)))
    data, truth = simulate_smart(cfg, 300, RngStream(4))
    s0 = data.stage(0)
    logit = 0.5 + 2.0 * s0.states[:, 0]
    p1 = 1 / (1 + np.exp(-logit))
    expected = np.where(s0.actions == 1, p1, 1 - p1)
    assert np.allclose(s0.behavior_prob, expected, rtol=1e-12)
    assert truth.responder_prob is None


def test_smart_no_rerandomization_for_responders():
    cfg = SmartConfig(rerandomize_responders=False)
    data, _ = simulate_smart(cfg, 1000, RngStream(5))
    s1 = data.stage(1)
    r = s1.states[:, cfg.p + 1] == 1.0
    assert np.all(s1.actions[r] == 0) and np.all(s1.behavior_prob[r] == 1.0)


def test_smart_pure_function_of_seed():
    a, _ = simulate_smart(SmartConfig(), 200, RngStream(9, 2))
    b, _ = simulate_smart(SmartConfig(), 200, RngStream(9, 2))
    assert all(x.records == y.records for x, y in zip(a.trajectories, b.trajectories))


def test_smart_config_violations_all_reported():
    cfg = SmartConfig(stage1_probs=(0.0, 1.0), noise_sd1=0.0, stage2_shared=(1.0,))
    with pytest.raises(ConfigError) as exc:
        cfg.validate()
    assert len(exc.value.violations) == 3


def test_expected_max_affine_against_monte_carlo():
    g = np.random.default_rng(0)
    c = np.array([0.1, -0.2, 0.3])
    S = np.array([[1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]])
    Z = g.standard_normal((2_000_000, 2))
    mc = np.max(c + Z @ S.T, axis=1).mean()
    assert expected_max_affine(c, S) == pytest.approx(mc, abs=3e-3)
    # two arms: closed form E max(0, N(u, s^2)) + c0
    assert expected_max_affine([0.0, 0.0], [[1.0], [-1.0]]) == pytest.approx(2 / np.sqrt(2 * np.pi), abs=1e-12)


def test_smart_truth_stage2_matches_mean_outcome():
    cfg = SmartConfig()
    data, truth = simulate_smart(cfg, 40_000, RngStream(6))
    s1 = data.stage(1)
    q = truth.q_values(1, s1.states)[np.arange(data.n), s1.actions]
    resid = s1.rewards - q
    assert abs(resid.mean()) < 3 * 0.5 / np.sqrt(data.n)
    assert resid.std() == pytest.approx(0.5, abs=0.01)


# --------------------------------------------------------------------------
# MRT


def test_mrt_no_missing_when_prob_zero():
    res = simulate_mrt(MrtConfig(horizon=50), FixedProbPolicy.uniform(2), 3, RngStream(0))
    assert not res.dataset.has_missing()


def test_mrt_missing_and_locf():
    res = simulate_mrt(MrtConfig(horizon=200, missing_prob=0.3), FixedProbPolicy.uniform(2), 2, RngStream(1))
    assert res.dataset.has_missing()
    filled = res.dataset.map_trajectories(apply_locf)
    assert not filled.has_missing()


def test_mrt_uniform_regret():
    cfg = MrtConfig(n_arms=2, horizon=10_000, arm_coefs=((1.0,), (0.4,)))
    res = simulate_mrt(cfg, FixedProbPolicy.uniform(2), 1, RngStream(2), record_dataset=False)
    assert abs(res.trace["regret"].mean() - 0.3) <= 0.02


def test_mrt_burn_in_probs():
    cfg = MrtConfig(horizon=40, burn_in_days=14)
    res = simulate_mrt(cfg, lambda u: LinUCBAgent(2, cfg.feature_map().dim), 2, RngStream(3))
    for tr in res.dataset.trajectories:
        probs = [r.behavior_prob for r in tr.records]
        assert probs[:14] == [0.5] * 14
        assert probs[14:] == [1.0] * 26


def test_mrt_recovery_states():
    cfg = MrtConfig(n_arms=3, horizon=60, z_max=4, arm_coefs=((1.0,), (0.5,), (0.0,)), habituation=(0, 0, 0))
    res = simulate_mrt(cfg, FixedProbPolicy.uniform(3), 1, RngStream(4))
    recs = res.dataset.trajectories[0].records
    assert recs[0].state.tolist() == [0.0, 0.0, 0.0]  # all arms start rested
    for prev, rec in zip(recs, recs[1:]):
        zbar = rec.state
        assert zbar[prev.action] == cfg.z_max
        assert np.sum(zbar == cfg.z_max) == 1 and zbar.min() >= 0


def test_mrt_arity_mismatch():
    with pytest.raises(SchemaError):
        simulate_mrt(MrtConfig(n_arms=2), FixedProbPolicy.uniform(3), 1, RngStream(0))


def test_mrt_habituation_repeat_vs_round_robin():
    cfg = MrtConfig(n_arms=2, horizon=5000, arm_coefs=((1.0,), (1.0,)), habituation=(-0.3, -0.3))
    rng = RngStream(5)
    repeat = simulate_mrt(cfg, ConstantPolicy(0, 2), 1, rng)
    rr = simulate_mrt(cfg, CyclicPolicy(2), 1, rng)
    y_rep = np.array(repeat.dataset.trajectories[0].rewards)
    y_rr = np.array(rr.dataset.trajectories[0].rewards)
    d = y_rr - y_rep  # paired through the shared environment stream
    se = d.std(ddof=1) / np.sqrt(d.shape[0])
    assert d.mean() > 3 * se


def test_mrt_pure_function_of_seed():
    cfg = MrtConfig(horizon=100)
    a = simulate_mrt(cfg, lambda u: LinUCBAgent(2, cfg.feature_map().dim), 2, RngStream(6))
    b = simulate_mrt(cfg, lambda u: LinUCBAgent(2, cfg.feature_map().dim), 2, RngStream(6))
    for k in a.trace:
        assert np.array_equal(a.trace[k], b.trace[k])


def test_write_regret_trace(tmp_path):
    res = simulate_mrt(MrtConfig(horizon=5), FixedProbPolicy.uniform(2), 2, RngStream(0))
    write_regret_trace(res.trace, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == 11
