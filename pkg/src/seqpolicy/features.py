"""Feature maps phi(state, action) shared by Q-models, simulators and bandits.

A feature map works on batches: ``fmap(states, actions)`` takes an ``(n, p)``
state array and an ``(n,)`` action array and returns an ``(n, d)`` design.
Maps are plain values and serialize to ``{"name": ..., **params}``.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from .errors import SchemaError


class FeatureMap:
    name = "abstract"

    def __init__(self, n_arms: int, state_dim: int):
        if n_arms < 1:
            raise SchemaError("a feature map needs at least one arm")
        self.n_arms = int(n_arms)
        self.state_dim = int(state_dim)

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _features(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.asarray(actions, dtype=int).reshape(-1)
        if states.shape[1] != self.state_dim:
            raise SchemaError(f"{self.name}: expected state dim {self.state_dim}, got {states.shape[1]}")
        if actions.shape[0] != states.shape[0]:
            raise SchemaError("states and actions have different lengths")
        if actions.size and (actions.min() < 0 or actions.max() >= self.n_arms):
            raise SchemaError(f"{self.name}: action outside 0..{self.n_arms - 1}")
        return self._features(states, actions)

    def all_arms(self, states) -> np.ndarray:
        """Features for every arm: shape ``(n, n_arms, dim)``."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        n = states.shape[0]
        out = np.empty((n, self.n_arms, self.dim))
        for a in range(self.n_arms):
            out[:, a, :] = self(states, np.full(n, a))
        return out

    def params(self) -> dict[str, Any]:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, **self.params()}

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class LinearArmMap(FeatureMap):
    """``[state[shared], e_a (x) [1, state[tailoring]]]``.

    Shared columns carry arm-independent main effects; each arm gets its own
    intercept and slopes on the tailoring columns.
    """

    name = "linear_arm"

    def __init__(self, n_arms: int, state_dim: int, tailoring: Sequence[int] | None = None,
                 shared: Sequence[int] = ()):
        super().__init__(n_arms, state_dim)
        self.tailoring = tuple(range(state_dim)) if tailoring is None else tuple(int(i) for i in tailoring)
        self.shared = tuple(int(i) for i in shared)
        for i in self.tailoring + self.shared:
            if not 0 <= i < state_dim:
                raise SchemaError(f"column {i} outside state of dim {state_dim}")

    @property
    def block(self) -> int:
        return 1 + len(self.tailoring)

    @property
    def dim(self) -> int:
        return len(self.shared) + self.n_arms * self.block

    def _features(self, states, actions):
        n = states.shape[0]
        out = np.zeros((n, self.dim))
        s = len(self.shared)
        if s:
            out[:, :s] = states[:, list(self.shared)]
        local = np.empty((n, self.block))
        local[:, 0] = 1.0
        local[:, 1:] = states[:, list(self.tailoring)]
        rows = np.arange(n)
        for j in range(self.block):
            out[rows, s + actions * self.block + j] = local[:, j]
        return out

    def params(self):
        return {"n_arms": self.n_arms, "state_dim": self.state_dim,
                "tailoring": list(self.tailoring), "shared": list(self.shared)}


class SaturatedMap(FeatureMap):
    """One-hot indicator of (history key, action) over a finite key set.

    The key of a state is the tuple of its entries; with this map least
    squares reproduces cell means exactly.
    """

    name = "saturated"

    def __init__(self, n_arms: int, keys: Sequence[Sequence[float]]):
        keys = [tuple(float(v) for v in k) for k in keys]
        if not keys:
            raise SchemaError("saturated map needs at least one key")
        super().__init__(n_arms, len(keys[0]))
        if any(len(k) != self.state_dim for k in keys):
            raise SchemaError("all keys must have the same length")
        self.keys = keys
        self._index = {k: i for i, k in enumerate(keys)}

    @property
    def dim(self) -> int:
        return len(self.keys) * self.n_arms

    def key_index(self, states) -> np.ndarray:
        try:
            return np.array([self._index[tuple(float(v) for v in row)] for row in states], dtype=int)
        except KeyError as exc:
            raise SchemaError(f"state {exc.args[0]} is not a declared key") from None

    def _features(self, states, actions):
        out = np.zeros((states.shape[0], self.dim))
        out[np.arange(states.shape[0]), self.key_index(states) * self.n_arms + actions] = 1.0
        return out

    def params(self):
        return {"n_arms": self.n_arms, "keys": [list(k) for k in self.keys]}


class RecoveryMap(FeatureMap):
    """Bandit features with recovery contexts.

    States are laid out as ``[x_1..x_p, zbar_1..zbar_K]``; arm ``a`` gets the
    block ``[1, x, zbar_a]`` and zeros elsewhere.
    """

    name = "recovery"

    def __init__(self, n_arms: int, context_dim: int):
        super().__init__(n_arms, context_dim + n_arms)
        self.context_dim = int(context_dim)

    @property
    def block(self) -> int:
        return self.context_dim + 2

    @property
    def dim(self) -> int:
        return self.n_arms * self.block

    def _features(self, states, actions):
        n = states.shape[0]
        p = self.context_dim
        out = np.zeros((n, self.dim))
        rows = np.arange(n)
        base = actions * self.block
        out[rows, base] = 1.0
        for j in range(p):
            out[rows, base + 1 + j] = states[:, j]
        out[rows, base + 1 + p] = states[rows, p + actions]
        return out

    def params(self):
        return {"n_arms": self.n_arms, "context_dim": self.context_dim}


class StateFeatures:
    """Arm-free features ``[1, state[idx]]`` for decision functions and values."""

    name = "state"

    def __init__(self, state_dim: int, columns: Sequence[int] | None = None, intercept: bool = True):
        self.state_dim = int(state_dim)
        self.columns = tuple(range(state_dim)) if columns is None else tuple(int(c) for c in columns)
        self.intercept = bool(intercept)
        for c in self.columns:
            if not 0 <= c < state_dim:
                raise SchemaError(f"column {c} outside state of dim {state_dim}")

    @property
    def dim(self) -> int:
        return len(self.columns) + int(self.intercept)

    def __call__(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.state_dim:
            raise SchemaError(f"expected state dim {self.state_dim}, got {states.shape[1]}")
        cols = states[:, list(self.columns)]
        if self.intercept:
            return np.column_stack([np.ones(states.shape[0]), cols])
        return cols

    def to_dict(self):
        return {"name": self.name, "state_dim": self.state_dim,
                "columns": list(self.columns), "intercept": self.intercept}

    def __eq__(self, other):
        return isinstance(other, StateFeatures) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"StateFeatures(state_dim={self.state_dim}, columns={self.columns}, intercept={self.intercept})"


class OneHotStateFeatures(StateFeatures):
    """Indicator of a discrete state value in column 0 (tabular value models)."""

    name = "one_hot_state"

    def __init__(self, values: Sequence[float]):
        super().__init__(1, (0,), intercept=False)
        self.values = tuple(float(v) for v in values)

    @property
    def dim(self) -> int:
        return len(self.values)

    def __call__(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        out = (states[:, [0]] == np.asarray(self.values)[None, :]).astype(float)
        if not np.all(out.sum(axis=1) == 1):
            raise SchemaError("state value outside the declared set")
        return out

    def to_dict(self):
        return {"name": self.name, "values": list(self.values)}


_REGISTRY = {cls.name: cls for cls in (LinearArmMap, SaturatedMap, RecoveryMap)}
_STATE_REGISTRY = {"state": StateFeatures, "one_hot_state": OneHotStateFeatures}


def feature_map_from_dict(d: dict[str, Any]):
    d = dict(d)
    name = d.pop("name")
    if name in _REGISTRY:
        return _REGISTRY[name](**d)
    if name in _STATE_REGISTRY:
        return _STATE_REGISTRY[name](**d)
    raise SchemaError(f"unknown feature map {name!r}")
