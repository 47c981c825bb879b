import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqpolicy.core import (MISSING, ConstantPolicy, CyclicPolicy, Dataset, FixedProbPolicy, LinearRulePolicy,
                            Schema, SoftmaxPolicy, StageRecord, TabularPolicy, Trajectory, argmax_lowest,
                            dataset_from_arrays, discounted_return, policy_action_probs, read_dataset_csv,
                            returns_to_go, target_probs_of_actions, write_dataset_csv)
from seqpolicy.errors import MissingRewardError, PositivityError, SchemaError
from seqpolicy.features import LinearArmMap


def traj(rewards, state=(0.0,)):
    return Trajectory(tuple(StageRecord(np.array(state), 0, y, 1.0) for y in rewards))


@pytest.mark.parametrize("rewards, gamma, expected", [
    ([5, 2, 7], 0.0, 5.0),
    ([1, 1, 1], 1.0, 3.0),
    ([1, 2, 4], 0.5, 3.0),
])
def test_discounted_return_examples(rewards, gamma, expected):
    assert discounted_return(traj(rewards), 0, gamma) == expected


def test_discounted_return_missing_in_window():
    tr = traj([1.0, MISSING, 2.0])
    with pytest.raises(MissingRewardError, match="impute"):
        discounted_return(tr, 0, 0.9)
    # the window starting after the gap is fine
    assert discounted_return(tr, 2, 0.9) == 2.0


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.floats(0, 1))
def test_discounted_return_recursion(rewards, gamma):
    tr = traj(rewards)
    for t in range(len(rewards) - 1):
        lhs = discounted_return(tr, t, gamma)
        rhs = rewards[t] + gamma * discounted_return(tr, t + 1, gamma)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


def test_returns_to_go_matches_scalar():
    Y = np.array([[1.0, 2.0, 4.0], [5.0, 2.0, 7.0]])
    R = returns_to_go(Y, 0.5)
    assert R[0, 0] == 3.0 and R[0, 1] == 4.0 and R[0, 2] == 4.0
    assert R[1, 0] == discounted_return(traj(Y[1]), 0, 0.5)


def test_softmax_examples():
    assert np.allclose(policy_action_probs(SoftmaxPolicy(np.zeros((4, 1))), 0, [2.0]), 0.25, atol=1e-15)
    p = policy_action_probs(SoftmaxPolicy([[0.0], [math.log(3)]]), 0, [1.0])
    assert p == pytest.approx([0.75, 0.25], abs=1e-14)


def test_deterministic_one_hot():
    p = policy_action_probs(ConstantPolicy(2, 3), 0, [0.3])
    assert p.tolist() == [0.0, 0.0, 1.0]


def test_policy_dimension_mismatch():
    with pytest.raises(SchemaError):
        policy_action_probs(SoftmaxPolicy(np.zeros((2, 2))), 0, [1.0])


@given(st.lists(st.floats(-30, 30), min_size=6, max_size=6), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_softmax_probs_sum_to_one(psi, x):
    pol = SoftmaxPolicy(np.array(psi).reshape(3, 2))
    p = policy_action_probs(pol, 0, x)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=10), st.floats(-1e6, 1e6))
def test_argmax_shift_invariant(q, c):
    q = np.array(q)
    # shifting can merge near-ties through rounding; compare on exactly representable shifts
    c = float(np.round(c))
    q = np.round(q)
    assert argmax_lowest(q) == argmax_lowest(q + c)


def test_argmax_ties_lowest():
    assert argmax_lowest([1.0, 3.0, 3.0]) == 1
    assert argmax_lowest(np.array([[2.0, 2.0], [0.0, 1.0]]), axis=1).tolist() == [0, 1]


def test_stage_record_validation():
    with pytest.raises(PositivityError):
        StageRecord([0.0], 0, 1.0, 0.0)
    with pytest.raises(SchemaError):
        StageRecord([0.0], -1, 1.0, 0.5)
    with pytest.raises(SchemaError):
        StageRecord([0.0], 0, float("nan"), 0.5)
    assert StageRecord([0.0], 0, MISSING, 0.5).reward is MISSING


def test_dataset_schema_checks():
    rec = StageRecord([0.0, 1.0], 1, 1.0, 0.5)
    with pytest.raises(SchemaError):
        Dataset((Trajectory((rec,)),), Schema.fixed([1], [2]))  # action >= arity
    with pytest.raises(SchemaError):
        Dataset((Trajectory((rec,)),), Schema.fixed([2], [3]))  # state length
    with pytest.raises(SchemaError):
        Dataset((Trajectory((rec, rec)),), Schema.fixed([2], [2]))  # horizon
    with pytest.raises(SchemaError):
        Dataset((), Schema.fixed([2], [2]))


def test_policies_actions():
    x = np.zeros((3, 1))
    assert CyclicPolicy(3).actions(4, x).tolist() == [1, 1, 1]
    tab = TabularPolicy([{(0.0,): 1, (1.0,): 0}], [2])
    assert tab.actions(0, [[1.0], [0.0]]).tolist() == [0, 1]
    fp = FixedProbPolicy([[0.2, 0.8], [1.0, 0.0]])
    assert fp.probs(1, x)[0].tolist() == [1.0, 0.0]


def test_linear_rule_policy_ties_and_shift():
    fm = LinearArmMap(2, 1, tailoring=())
    pol = LinearRulePolicy([fm], [np.array([1.0, 3.0])])
    assert pol.actions(0, [[0.0]]).tolist() == [1]
    tie = LinearRulePolicy([fm], [np.array([2.0, 2.0])])
    assert tie.actions(0, [[0.0]]).tolist() == [0]
    shifted = LinearRulePolicy([fm], [np.array([101.0, 103.0])])
    assert shifted.actions(0, [[0.0]]).tolist() == [1]


def test_target_probs_deterministic_and_stochastic_agree():
    states = np.array([[0.0], [1.0]])
    actions = np.array([1, 0])
    det = target_probs_of_actions(ConstantPolicy(1, 2), 0, states, actions)
    sto = target_probs_of_actions(FixedProbPolicy([0.0, 1.0]), 0, states, actions)
    assert det.tolist() == sto.tolist() == [1.0, 0.0]


def test_complete_rewards_raises_on_missing():
    data = dataset_from_arrays([np.zeros((2, 1))], np.array([0, 1]), np.array([1.0, np.nan]),
                               np.array([0.5, 0.5]), [2])
    assert data.has_missing()
    with pytest.raises(MissingRewardError):
        data.complete_rewards()


def test_csv_round_trip(tmp_path):
    states = [np.arange(6.0).reshape(3, 2), np.arange(9.0).reshape(3, 3) / 7]
    A = np.array([[0, 1], [1, 2], [1, 0]])
    Y = np.array([[1.5, np.nan], [0.1, 2.0], [-3.0, 1e-17]])
    P = np.array([[0.5, 0.25], [0.5, 1.0], [0.5, 0.3]])
    data = dataset_from_arrays(states, A, Y, P, [2, 3])
    write_dataset_csv(data, tmp_path / "d.csv")
    back = read_dataset_csv(tmp_path / "d.csv")
    assert back.schema == data.schema
    for a, b in zip(data.trajectories, back.trajectories):
        assert a.records == b.records
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "unit_id,stage,state_0,state_1,state_2,action,reward,behavior_prob"
    assert ",1,,0.25" in (tmp_path / "d.csv").read_text()  # MISSING is an empty cell
