"""Trajectory data model, policies and returns.

Rewards follow the action: the record for stage ``t`` holds the state ``X_t``,
the action ``A_t``, the reward ``Y_{t+1}`` and the probability with which the
generating policy picked ``A_t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .errors import MissingRewardError, PositivityError, SchemaError
from .features import FeatureMap

PROB_TOL = 1e-12


class _Missing:
    """Sentinel for an unobserved reward. Use the module constant ``MISSING``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


def is_missing(reward) -> bool:
    return reward is MISSING


@dataclass(frozen=True)
class StageRecord:
    state: np.ndarray
    action: int
    reward: Any  # float or MISSING
    behavior_prob: float

    def __post_init__(self):
        state = np.array(self.state, dtype=float).reshape(-1)
        state.setflags(write=False)
        object.__setattr__(self, "state", state)
        action = int(self.action)
        if action < 0 or action != self.action:
            raise SchemaError(f"action must be a non-negative integer, got {self.action!r}")
        object.__setattr__(self, "action", action)
        if self.reward is not MISSING:
            reward = float(self.reward)
            if not math.isfinite(reward):
                raise SchemaError("rewards must be finite; use MISSING for unobserved values")
            object.__setattr__(self, "reward", reward)
        p = float(self.behavior_prob)
        if not (0.0 < p <= 1.0):
            raise PositivityError(f"behavior_prob must lie in (0, 1], got {p}")
        object.__setattr__(self, "behavior_prob", p)

    def __eq__(self, other):
        return (isinstance(other, StageRecord) and np.array_equal(self.state, other.state)
                and self.action == other.action and self.reward == other.reward
                and self.behavior_prob == other.behavior_prob)

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    records: tuple[StageRecord, ...]
    unit_id: Any = None

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise SchemaError("a trajectory needs at least one record")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, t):
        return self.records[t]

    @property
    def rewards(self) -> list:
        return [r.reward for r in self.records]

    def with_rewards(self, rewards: Sequence) -> "Trajectory":
        if len(rewards) != len(self.records):
            raise SchemaError("reward sequence length differs from trajectory length")
        return Trajectory(tuple(StageRecord(r.state, r.action, y, r.behavior_prob)
                                for r, y in zip(self.records, rewards)), self.unit_id)


@dataclass(frozen=True)
class Schema:
    """Per-stage action arity and state dimension.

    With ``horizon=None`` (indefinite horizon) the single entry of each tuple
    applies to every stage.
    """

    n_arms: tuple[int, ...]
    state_dims: tuple[int, ...]
    horizon: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_arms", tuple(int(k) for k in self.n_arms))
        object.__setattr__(self, "state_dims", tuple(int(p) for p in self.state_dims))
        if len(self.n_arms) != len(self.state_dims):
            raise SchemaError("n_arms and state_dims must have the same length")
        if self.horizon is None:
            if len(self.n_arms) != 1:
                raise SchemaError("an indefinite-horizon schema declares a single stage layout")
        elif len(self.n_arms) != self.horizon:
            raise SchemaError(f"fixed horizon {self.horizon} needs {self.horizon} stage layouts")
        if any(k < 1 for k in self.n_arms):
            raise SchemaError("every stage needs at least one arm")

    @classmethod
    def fixed(cls, n_arms: Sequence[int], state_dims: Sequence[int]) -> "Schema":
        return cls(tuple(n_arms), tuple(state_dims), len(n_arms))

    @classmethod
    def indefinite(cls, n_arms: int, state_dim: int) -> "Schema":
        return cls((n_arms,), (state_dim,), None)

    def arms_at(self, t: int) -> int:
        return self.n_arms[0 if self.horizon is None else t]

    def dim_at(self, t: int) -> int:
        return self.state_dims[0 if self.horizon is None else t]

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "n_arms": list(self.n_arms), "state_dims": list(self.state_dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(tuple(d["n_arms"]), tuple(d["state_dims"]), d.get("horizon"))


@dataclass
class StageArrays:
    """Column view of one stage of a fixed-horizon dataset."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # NaN where missing; check ``missing`` before use
    missing: np.ndarray
    behavior_prob: np.ndarray


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    schema: Schema
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise SchemaError("a dataset needs at least one trajectory")
        object.__setattr__(self, "trajectories", trajs)
        s = self.schema
        for i, tr in enumerate(trajs):
            if s.horizon is not None and len(tr) != s.horizon:
                raise SchemaError(f"trajectory {i} has length {len(tr)}, schema horizon is {s.horizon}")
            for t, rec in enumerate(tr.records):
                if rec.action >= s.arms_at(t):
                    raise SchemaError(f"trajectory {i} stage {t}: action {rec.action} >= arity {s.arms_at(t)}")
                if rec.state.shape[0] != s.dim_at(t):
                    raise SchemaError(f"trajectory {i} stage {t}: state length {rec.state.shape[0]} "
                                      f"!= schema dim {s.dim_at(t)}")

    def __len__(self):
        return len(self.trajectories)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def horizon(self) -> int | None:
        return self.schema.horizon

    def require_fixed(self) -> int:
        if self.schema.horizon is None:
            raise SchemaError("this operation needs a fixed-horizon dataset")
        return self.schema.horizon

    def stage(self, t: int) -> StageArrays:
        """Arrays for stage ``t`` across all trajectories (fixed horizon only)."""
        self.require_fixed()
        key = ("stage", t)
        if key not in self._cache:
            recs = [tr.records[t] for tr in self.trajectories]
            missing = np.array([r.reward is MISSING for r in recs])
            rewards = np.array([np.nan if r.reward is MISSING else r.reward for r in recs], dtype=float)
            self._cache[key] = StageArrays(
                states=np.array([r.state for r in recs], dtype=float).reshape(len(recs), self.schema.dim_at(t)),
                actions=np.array([r.action for r in recs], dtype=int),
                rewards=rewards,
                missing=missing,
                behavior_prob=np.array([r.behavior_prob for r in recs], dtype=float),
            )
        return self._cache[key]

    def complete_rewards(self) -> np.ndarray:
        """``(n, T)`` reward matrix; raises if any reward is MISSING."""
        T = self.require_fixed()
        Y = np.column_stack([self.stage(t).rewards for t in range(T)])
        if np.isnan(Y).any():
            raise MissingRewardError("dataset contains MISSING rewards; impute before computing returns")
        return Y

    def has_missing(self) -> bool:
        return any(r.reward is MISSING for tr in self.trajectories for r in tr.records)

    def map_trajectories(self, fn: Callable[[Trajectory], Trajectory]) -> "Dataset":
        return Dataset(tuple(fn(tr) for tr in self.trajectories), self.schema)

    def with_behavior_probs(self, fn: Callable[[int, np.ndarray, int], float]) -> "Dataset":
        """Copy with ``behavior_prob`` replaced by ``fn(stage, state, action)``."""
        return self.map_trajectories(lambda tr: Trajectory(tuple(
            StageRecord(r.state, r.action, r.reward, fn(t, r.state, r.action))
            for t, r in enumerate(tr.records)), tr.unit_id))


def discounted_return(traj: Trajectory, t: int = 0, gamma: float = 1.0) -> float:
    """``sum_{tau >= t} gamma^(tau - t) * Y_{tau+1}`` with ``0^0 = 1``."""
    if not 0 <= t < len(traj):
        raise IndexError(f"stage {t} outside trajectory of length {len(traj)}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    total = 0.0
    discount = 1.0
    for rec in traj.records[t:]:
        if rec.reward is MISSING:
            raise MissingRewardError("MISSING reward in return window; impute before computing returns")
        total += discount * rec.reward
        discount *= gamma
        if discount == 0.0:
            break
    return total


def returns_to_go(rewards: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """Row-wise discounted returns from every stage of an ``(n, T)`` reward matrix."""
    R = np.zeros_like(rewards, dtype=float)
    acc = np.zeros(rewards.shape[0])
    for t in range(rewards.shape[1] - 1, -1, -1):
        acc = rewards[:, t] + gamma * acc
        R[:, t] = acc
    return R


def argmax_lowest(values, axis: int = -1) -> np.ndarray:
    """Argmax with ties broken toward the lowest index (numpy's behaviour)."""
    return np.argmax(np.asarray(values), axis=axis)


# --------------------------------------------------------------------------
# Policies


class PolicySpec:
    """Maps stage-``t`` state features to action probabilities.

    Subclasses implement :meth:`probs` on batches of states.
    """

    deterministic = False

    def n_arms(self, stage: int) -> int:
        raise NotImplementedError

    def state_dim(self, stage: int) -> int | None:
        return None

    def probs(self, stage: int, states) -> np.ndarray:
        raise NotImplementedError

    def actions(self, stage: int, states) -> np.ndarray:
        """Greedy/assigned action per row (deterministic policies only)."""
        return argmax_lowest(self.probs(stage, states), axis=1)

    def _check(self, stage: int, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        p = self.state_dim(stage)
        if p is not None and states.shape[1] != p:
            raise SchemaError(f"stage {stage}: policy expects {p} features, got {states.shape[1]}")
        return states

    @property
    def kind(self) -> str:
        return "deterministic" if self.deterministic else "stochastic"


def policy_action_probs(policy: PolicySpec, stage: int, features) -> np.ndarray:
    """Probability vector over arms for a single feature vector."""
    x = np.asarray(features, dtype=float).reshape(1, -1)
    p = policy.probs(stage, x)[0]
    if p.shape[0] != policy.n_arms(stage):
        raise SchemaError("policy returned a vector of the wrong length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"policy produced an invalid probability vector {p}")
    return p


def _one_hot(actions: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((actions.shape[0], k))
    out[np.arange(actions.shape[0]), actions] = 1.0
    return out


class DeterministicPolicy(PolicySpec):
    deterministic = True

    def probs(self, stage, states):
        a = self.actions(stage, states)
        return _one_hot(a, self.n_arms(stage))


class FixedProbPolicy(PolicySpec):
    """State-independent randomization probabilities (one vector per stage or one for all)."""

    def __init__(self, probs: Sequence[float] | Sequence[Sequence[float]]):
        arr = np.asarray(probs, dtype=float)
        self._probs = [arr] if arr.ndim == 1 else [np.asarray(p, dtype=float) for p in probs]
        for p in self._probs:
            if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
                raise ValueError(f"invalid probability vector {p}")

    @classmethod
    def uniform(cls, n_arms: int) -> "FixedProbPolicy":
        return cls(np.full(n_arms, 1.0 / n_arms))

    def _at(self, stage):
        return self._probs[0] if len(self._probs) == 1 else self._probs[stage]

    def n_arms(self, stage):
        return self._at(stage).shape[0]

    def probs(self, stage, states):
        states = self._check(stage, states)
        return np.tile(self._at(stage), (states.shape[0], 1))


class ConstantPolicy(DeterministicPolicy):
    """Always the same arm (the static control group)."""

    def __init__(self, arm: int, n_arms: int):
        if not 0 <= arm < n_arms:
            raise SchemaError("arm outside 0..n_arms-1")
        self.arm = int(arm)
        self._k = int(n_arms)

    def n_arms(self, stage):
        return self._k

    def actions(self, stage, states):
        states = self._check(stage, states)
        return np.full(states.shape[0], self.arm, dtype=int)


class CyclicPolicy(DeterministicPolicy):
    """Round robin: arm ``stage mod K``."""

    def __init__(self, n_arms: int):
        self._k = int(n_arms)

    def n_arms(self, stage):
        return self._k

    def actions(self, stage, states):
        states = self._check(stage, states)
        return np.full(states.shape[0], stage % self._k, dtype=int)


class SoftmaxPolicy(PolicySpec):
    """``pi(a_k | x) = exp(-x'psi_k) / sum_j exp(-x'psi_j)``.

    ``psi`` has shape ``(K, p)`` (one row per arm) and is shared across stages
    unless a list of per-stage matrices is given. With ``intercept=True`` a
    leading 1 is prepended to ``x``.
    """

    def __init__(self, psi, intercept: bool = False):
        if isinstance(psi, (list, tuple)) and psi and np.ndim(psi[0]) == 2:
            self.psi = [np.asarray(m, dtype=float) for m in psi]
        else:
            self.psi = [np.atleast_2d(np.asarray(psi, dtype=float))]
        self.intercept = intercept

    def _at(self, stage):
        return self.psi[0] if len(self.psi) == 1 else self.psi[stage]

    def n_arms(self, stage):
        return self._at(stage).shape[0]

    def state_dim(self, stage):
        return self._at(stage).shape[1] - int(self.intercept)

    def probs(self, stage, states):
        x = self._check(stage, states)
        if self.intercept:
            x = np.column_stack([np.ones(x.shape[0]), x])
        scores = -x @ self._at(stage).T
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        return e / e.sum(axis=1, keepdims=True)


class LinearRulePolicy(DeterministicPolicy):
    """Per stage, pick ``argmax_a phi_t(x, a)' theta_t`` (lowest index on ties)."""

    def __init__(self, feature_maps: Sequence[FeatureMap], coefs: Sequence[np.ndarray]):
        if len(feature_maps) != len(coefs):
            raise SchemaError("one coefficient vector per feature map")
        self.feature_maps = list(feature_maps)
        self.coefs = [np.asarray(c, dtype=float) for c in coefs]
        for fm, c in zip(self.feature_maps, self.coefs):
            if c.shape != (fm.dim,):
                raise SchemaError(f"coefficient length {c.shape} does not match {fm.name} dim {fm.dim}")

    def _at(self, stage):
        i = 0 if len(self.feature_maps) == 1 else stage
        return self.feature_maps[i], self.coefs[i]

    def n_arms(self, stage):
        return self._at(stage)[0].n_arms

    def state_dim(self, stage):
        return self._at(stage)[0].state_dim

    def q_values(self, stage, states) -> np.ndarray:
        fm, c = self._at(stage)
        states = self._check(stage, states)
        return fm.all_arms(states) @ c

    def actions(self, stage, states):
        return argmax_lowest(self.q_values(stage, states), axis=1)


class SignRulePolicy(DeterministicPolicy):
    """Two-arm rule: arm 1 where ``f(x) > 0``, arm 0 otherwise (``sign(0) = -1``).

    ``decision_fns`` is one object per stage exposing ``decision(states)``.
    """

    def __init__(self, decision_fns: Sequence[Any]):
        self.decision_fns = list(decision_fns)

    def n_arms(self, stage):
        return 2

    def _at(self, stage):
        return self.decision_fns[0] if len(self.decision_fns) == 1 else self.decision_fns[stage]

    def state_dim(self, stage):
        return self._at(stage).features.state_dim

    def actions(self, stage, states):
        states = self._check(stage, states)
        return (self._at(stage).decision(states) > 0).astype(int)


class TabularPolicy(DeterministicPolicy):
    """Lookup from state tuple to arm, per stage."""

    def __init__(self, tables: Sequence[dict], n_arms: Sequence[int]):
        self.tables = [{tuple(float(v) for v in k): int(a) for k, a in tb.items()} for tb in tables]
        self._k = list(n_arms)

    def n_arms(self, stage):
        return self._k[0 if len(self._k) == 1 else stage]

    def actions(self, stage, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        tb = self.tables[0 if len(self.tables) == 1 else stage]
        try:
            return np.array([tb[tuple(float(v) for v in row)] for row in states], dtype=int)
        except KeyError as exc:
            raise SchemaError(f"no rule for state {exc.args[0]}") from None


class CallablePolicy(PolicySpec):
    """Wrap ``fn(stage, states) -> (n, K)`` probabilities."""

    def __init__(self, fn: Callable[[int, np.ndarray], np.ndarray], n_arms: int, deterministic: bool = False):
        self.fn = fn
        self._k = int(n_arms)
        self.deterministic = deterministic

    def n_arms(self, stage):
        return self._k

    def probs(self, stage, states):
        return np.asarray(self.fn(stage, np.atleast_2d(np.asarray(states, dtype=float))), dtype=float)


def target_probs_of_actions(policy: PolicySpec, stage: int, states, actions) -> np.ndarray:
    """``d_t(A_t | X_t)`` for observed actions; indicator form for deterministic rules."""
    actions = np.asarray(actions, dtype=int)
    if policy.deterministic:
        return (policy.actions(stage, states) == actions).astype(float)
    P = policy.probs(stage, states)
    return P[np.arange(actions.shape[0]), actions]


# --------------------------------------------------------------------------
# CSV serialization


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(dataset: Dataset, path, schema_path=None) -> None:
    """Write the long-format CSV; MISSING rewards become empty cells.

    The schema goes to a YAML sidecar (``<path>.schema.yaml`` by default).
    """
    path = Path(path)
    p = max(dataset.schema.state_dims)
    header = ["unit_id", "stage"] + [f"state_{j}" for j in range(p)] + ["action", "reward", "behavior_prob"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, tr in enumerate(dataset.trajectories):
            uid = tr.unit_id if tr.unit_id is not None else i
            for t, rec in enumerate(tr.records):
                state = [_fmt(v) for v in rec.state] + [""] * (p - rec.state.shape[0])
                reward = "" if rec.reward is MISSING else _fmt(rec.reward)
                w.writerow([uid, t, *state, rec.action, reward, _fmt(rec.behavior_prob)])
    schema_path = Path(schema_path) if schema_path else path.with_suffix(path.suffix + ".schema.yaml")
    schema_path.write_text(yaml.safe_dump(dataset.schema.to_dict(), sort_keys=True))


def read_dataset_csv(path, schema: Schema | None = None, schema_path=None) -> Dataset:
    path = Path(path)
    if schema is None:
        schema_path = Path(schema_path) if schema_path else path.with_suffix(path.suffix + ".schema.yaml")
        schema = Schema.from_dict(yaml.safe_load(schema_path.read_text()))
    units: dict[str, list[tuple[int, StageRecord]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        state_cols = [c for c in reader.fieldnames or [] if c.startswith("state_")]
        for row in reader:
            t = int(row["stage"])
            p = schema.dim_at(t)
            state = [float(row[c]) for c in state_cols[:p]]
            reward = MISSING if row["reward"] == "" else float(row["reward"])
            rec = StageRecord(np.array(state), int(row["action"]), reward, float(row["behavior_prob"]))
            units.setdefault(row["unit_id"], []).append((t, rec))
    trajs = []
    for uid, recs in units.items():
        recs.sort(key=lambda x: x[0])
        if [t for t, _ in recs] != list(range(len(recs))):
            raise SchemaError(f"unit {uid}: stages are not 0..T-1")
        trajs.append(Trajectory(tuple(r for _, r in recs), _maybe_int(uid)))
    return Dataset(tuple(trajs), schema)


def _maybe_int(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def dataset_from_arrays(states: Sequence[np.ndarray], actions: np.ndarray, rewards: np.ndarray,
                        behavior_prob: np.ndarray, n_arms: Sequence[int]) -> Dataset:
    """Build a fixed-horizon dataset from stage-major arrays.

    ``states[t]`` is ``(n, p_t)``; ``actions``, ``rewards`` and
    ``behavior_prob`` are ``(n, T)``. NaN rewards become MISSING.
    """
    actions = np.asarray(actions)
    rewards = np.asarray(rewards, dtype=float)
    behavior_prob = np.asarray(behavior_prob, dtype=float)
    if actions.ndim == 1:
        actions, rewards, behavior_prob = actions[:, None], rewards[:, None], behavior_prob[:, None]
    n, T = actions.shape
    states = [np.atleast_2d(np.asarray(s, dtype=float)).reshape(n, -1) for s in states]
    trajs = []
    for i in range(n):
        recs = tuple(StageRecord(states[t][i], int(actions[i, t]),
                                 MISSING if np.isnan(rewards[i, t]) else float(rewards[i, t]),
                                 float(behavior_prob[i, t])) for t in range(T))
        trajs.append(Trajectory(recs, i))
    return Dataset(tuple(trajs), Schema.fixed(n_arms, [s.shape[1] for s in states]))
