"""Q-learning: tabular updates and backward induction with linear models."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
import yaml

from .core import Dataset, LinearRulePolicy, PolicySpec
from .errors import ParameterError, SchemaError
from .features import FeatureMap, feature_map_from_dict
from .numerics import ridge_fit

# --------------------------------------------------------------------------
# Tabular


@dataclass
class QTable:
    """Q-values keyed by ``(history key, action)``; unseen entries read as 0."""

    values: dict = field(default_factory=dict)
    visits: dict = field(default_factory=lambda: defaultdict(int))

    def get(self, key: Hashable, action: int) -> float:
        return self.values.get((key, action), 0.0)

    def copy(self) -> "QTable":
        return QTable(dict(self.values), defaultdict(int, self.visits))

    def greedy(self, key: Hashable, arms: Iterable[int]) -> int:
        arms = list(arms)
        return arms[int(np.argmax([self.get(key, a) for a in arms]))]


def tabular_q_update(q: QTable, transition, alpha: float, gamma: float = 1.0,
                     inplace: bool = False) -> QTable:
    """One update ``Q(h,a) += alpha * (y + gamma * max_a' Q(h',a') - Q(h,a))``.

    ``transition`` is ``(h, a, y, h_next, next_arms)``; terminal transitions
    pass an empty ``next_arms`` so the max term is 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    h, a, y, h_next, next_arms = transition
    out = q if inplace else q.copy()
    future = max((q.get(h_next, b) for b in next_arms), default=0.0)
    old = q.get(h, a)
    out.values[(h, a)] = old + alpha * (y + gamma * future - old)
    out.visits[(h, a)] += 1
    return out


def q_learning_sweeps(transitions: Sequence, n_sweeps: int, gamma: float = 1.0,
                      q: QTable | None = None) -> QTable:
    """Repeatedly apply :func:`tabular_q_update` over ``transitions`` with
    ``alpha = 1 / visit count`` (a running mean of the targets per cell)."""
    q = QTable() if q is None else q.copy()
    vals, visits = q.values, q.visits
    for _ in range(n_sweeps):
        for h, a, y, h_next, next_arms in transitions:
            future = max((vals.get((h_next, b), 0.0) for b in next_arms), default=0.0)
            k = visits[(h, a)] + 1
            visits[(h, a)] = k
            old = vals.get((h, a), 0.0)
            vals[(h, a)] = old + (y + gamma * future - old) / k
    return q


def dataset_transitions(data: Dataset) -> list:
    """Tabular transitions from a fixed-horizon dataset, keyed by ``(t, *state)``."""
    T = data.require_fixed()
    Y = data.complete_rewards()
    out = []
    for i, tr in enumerate(data.trajectories):
        for t, rec in enumerate(tr.records):
            h = (t, *map(float, rec.state))
            if t + 1 < T:
                nxt = tr.records[t + 1]
                h_next, arms = (t + 1, *map(float, nxt.state)), tuple(range(data.schema.arms_at(t + 1)))
            else:
                h_next, arms = None, ()
            out.append((h, rec.action, float(Y[i, t]), h_next, arms))
    return out


# --------------------------------------------------------------------------
# Linear function approximation


@dataclass
class LinearQModel:
    feature_maps: list
    coefs: list
    gamma: float = 1.0

    def __post_init__(self):
        if len(self.feature_maps) != len(self.coefs):
            raise SchemaError("one coefficient vector per stage")
        self.coefs = [np.asarray(c, dtype=float) for c in self.coefs]
        for t, (fm, c) in enumerate(zip(self.feature_maps, self.coefs)):
            if c.shape != (fm.dim,):
                raise SchemaError(f"stage {t}: {c.shape[0]} coefficients for a {fm.dim}-dim feature map")

    @property
    def horizon(self) -> int:
        return len(self.coefs)

    def q_values(self, stage: int, states) -> np.ndarray:
        """``(n, K)`` matrix of fitted Q-values."""
        return self.feature_maps[stage].all_arms(states) @ self.coefs[stage]

    def to_dict(self) -> dict:
        return {"gamma": float(self.gamma),
                "stages": [{"stage": t, "feature_map": fm.to_dict(), "coefficients": [float(v) for v in c]}
                           for t, (fm, c) in enumerate(zip(self.feature_maps, self.coefs))]}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearQModel":
        stages = sorted(d["stages"], key=lambda s: s["stage"])
        return cls([feature_map_from_dict(s["feature_map"]) for s in stages],
                   [np.array(s["coefficients"], dtype=float) for s in stages], d.get("gamma", 1.0))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "LinearQModel":
        return cls.from_dict(yaml.safe_load(text))


def fit_q_backward(data: Dataset, feature_maps: Sequence[FeatureMap], ridge_lambda: float = 1e-6,
                   gamma: float = 1.0) -> LinearQModel:
    """Backward induction with ridge regression at every stage.

    Stage ``T`` regresses its reward on ``phi_T``; earlier stages regress the
    pseudo-outcome ``Y_{t+1} + gamma * max_a Q_{t+1}(h_{t+1}, a)``.
    """
    T = data.require_fixed()
    if len(feature_maps) != T:
        raise SchemaError(f"need {T} feature maps, got {len(feature_maps)}")
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError("gamma must lie in [0, 1]")
    Y = data.complete_rewards()
    coefs: list = [None] * T
    target = Y[:, T - 1]
    for t in range(T - 1, -1, -1):
        st = data.stage(t)
        fm = feature_maps[t]
        if fm.n_arms != data.schema.arms_at(t):
            raise SchemaError(f"stage {t}: feature map has {fm.n_arms} arms, data has {data.schema.arms_at(t)}")
        coefs[t] = ridge_fit(fm(st.states, st.actions), target, ridge_lambda)
        if t > 0:
            q_next = fm.all_arms(st.states) @ coefs[t]
            target = Y[:, t - 1] + gamma * q_next.max(axis=1)
    return LinearQModel(list(feature_maps), coefs, gamma)


def greedy_policy_from_q(model: LinearQModel) -> PolicySpec:
    """Deterministic regime ``argmax_a Q_t(h, a)`` (lowest arm on ties)."""
    return LinearRulePolicy(model.feature_maps, model.coefs)
