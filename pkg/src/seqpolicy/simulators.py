"""Generative environments with known ground truth.

* :func:`simulate_smart` draws two-stage sequentially randomized trials whose
  optimal Q-functions are linear in known feature maps, so fitted models can be
  compared with exact coefficients.
* :func:`simulate_mrt` runs a daily-message micro-randomized trial with
  recovery (habituation) contexts under a fixed policy or an online agent.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import roots_hermitenorm
from scipy.stats import norm

from .core import (MISSING, Dataset, LinearRulePolicy, PolicySpec, Schema, StageRecord, Trajectory,
                   dataset_from_arrays)
from .errors import ConfigError, SchemaError
from .features import LinearArmMap, RecoveryMap
from .numerics import RngStream

# --------------------------------------------------------------------------
# Recovery contexts


@dataclass(frozen=True)
class RecoveryContext:
    """Days since each arm was last played, capped at ``z_max``."""

    z: tuple[int, ...]
    z_max: int

    def __post_init__(self):
        z = tuple(int(v) for v in self.z)
        if self.z_max < 1:
            raise ValueError("z_max must be >= 1")
        if any(v < 0 or v > self.z_max for v in z):
            raise ValueError(f"entries must lie in 0..{self.z_max}, got {z}")
        object.__setattr__(self, "z", z)

    @classmethod
    def rested(cls, n_arms: int, z_max: int) -> "RecoveryContext":
        # no arm starts habituated
        return cls((z_max,) * n_arms, z_max)

    @property
    def z_bar(self) -> np.ndarray:
        return self.z_max - np.asarray(self.z, dtype=float)


def update_recovery_context(z, action: int, z_max: int | None = None) -> RecoveryContext:
    """Reset the played arm to 0 and age every other arm by one day (capped)."""
    if isinstance(z, RecoveryContext):
        z_max = z.z_max if z_max is None else z_max
        z = z.z
    if z_max is None:
        raise ValueError("z_max is required when z is a plain sequence")
    if not 0 <= action < len(z):
        raise IndexError(f"action {action} outside 0..{len(z) - 1}")
    return RecoveryContext(tuple(0 if j == action else min(z_max, v + 1) for j, v in enumerate(z)), z_max)


# --------------------------------------------------------------------------
# LOCF


def apply_locf(traj: Trajectory, leading: float = 0.0) -> Trajectory:
    """Carry the last observed reward forward over MISSING entries.

    Rewards missing before the first observation are set to ``leading``.
    """
    last = leading
    out = []
    for r in traj.rewards:
        if r is MISSING:
            out.append(last)
        else:
            out.append(r)
            last = r
    return traj.with_rewards(out)


# --------------------------------------------------------------------------
# SMART


def _probs_invalid(p) -> bool:
    p = np.asarray(p, dtype=float)
    return p.ndim != 1 or np.any(p <= 0) or np.any(p >= 1) or abs(p.sum() - 1.0) > 1e-9


@dataclass(frozen=True)
class SmartConfig:
    """Two-stage SMART with a responder-dependent second randomization.

    Stage 1: ``X0 ~ N(0, I_p)``, arm ``A0`` drawn from ``stage1_probs`` (or a
    softmax of ``stage1_logits @ [1, X0]`` in observational mode) and
    ``Y1 = stage1_coefs[A0] . [1, X0] + N(0, noise_sd1^2)``.
    A unit responds when ``Y1 >= responder_threshold``.

    Stage 2: a fresh tailoring covariate ``X1 ~ N(0, I_q)``; responders are
    rerandomized with ``stage2_probs_responders`` (or kept on arm 0 when
    ``rerandomize_responders`` is false), nonresponders with
    ``stage2_probs_nonresponders``;
    ``Y2 = shared . [1, X0, Y1] + stage2_coefs[A1] . [1, X1] + N(0, noise_sd2^2)``.

    The stage-2 state is ``[X0, Y1, R, X1]``.
    """

    p: int = 1
    q: int = 1
    stage1_probs: tuple = (0.5, 0.5)
    stage1_coefs: tuple = ((1.0, 1.0), (1.0, -1.0))
    noise_sd1: float = 0.5
    responder_threshold: float = 1.0
    rerandomize_responders: bool = True
    stage2_probs_responders: tuple = (0.5, 0.5)
    stage2_probs_nonresponders: tuple = (0.5, 0.5)
    stage2_shared: tuple = (0.5, 0.0, 0.5)
    stage2_coefs: tuple = ((0.0, 1.0), (0.0, -1.0))
    noise_sd2: float = 0.5
    stage1_logits: tuple | None = None
    stage2_logits: tuple | None = None
    gamma: float = 1.0

    def violations(self) -> list[str]:
        v = []
        if self.p < 0 or self.q < 0:
            v.append("p and q must be non-negative")
        c1 = np.asarray(self.stage1_coefs, dtype=float)
        c2 = np.asarray(self.stage2_coefs, dtype=float)
        if c1.ndim != 2 or c1.shape[1] != self.p + 1:
            v.append(f"stage1_coefs must be K1 x {self.p + 1}")
        if c2.ndim != 2 or c2.shape[1] != self.q + 1:
            v.append(f"stage2_coefs must be K2 x {self.q + 1}")
        if len(self.stage2_shared) != self.p + 2:
            v.append(f"stage2_shared must have length {self.p + 2} ([1, X0, Y1])")
        k1 = c1.shape[0] if c1.ndim == 2 else None
        k2 = c2.shape[0] if c2.ndim == 2 else None
        for name, probs, k in (("stage1_probs", self.stage1_probs, k1),
                               ("stage2_probs_responders", self.stage2_probs_responders, k2),
                               ("stage2_probs_nonresponders", self.stage2_probs_nonresponders, k2)):
            if _probs_invalid(probs):
                v.append(f"{name} must lie in (0,1) and sum to 1")
            elif k is not None and len(probs) != k:
                v.append(f"{name} has {len(probs)} entries, expected {k}")
        for name, logits, k, d in (("stage1_logits", self.stage1_logits, k1, self.p + 1),
                                   ("stage2_logits", self.stage2_logits, k2, self.q + 1)):
            if logits is not None and np.asarray(logits, dtype=float).shape != (k, d):
                v.append(f"{name} must have shape ({k}, {d})")
        if not (self.noise_sd1 > 0 and self.noise_sd2 > 0):
            v.append("noise sds must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            v.append("gamma must lie in [0, 1]")
        return v

    def validate(self) -> "SmartConfig":
        v = self.violations()
        if v:
            raise ConfigError(v)
        return self

    @property
    def k1(self) -> int:
        return len(self.stage1_coefs)

    @property
    def k2(self) -> int:
        return len(self.stage2_coefs)

    @property
    def stage2_dim(self) -> int:
        return self.p + 2 + self.q

    def feature_maps(self) -> tuple[LinearArmMap, LinearArmMap]:
        """Feature maps under which the true Q-functions are exactly linear."""
        fm1 = LinearArmMap(self.k1, self.p)
        fm2 = LinearArmMap(self.k2, self.stage2_dim,
                           tailoring=range(self.p + 2, self.stage2_dim), shared=range(self.p + 1))
        return fm1, fm2

    def decision_columns(self) -> tuple[list[int], list[int]]:
        """State columns that tailor the optimal rule at each stage."""
        return list(range(self.p)), list(range(self.p + 2, self.stage2_dim))


@dataclass
class SmartTruth:
    feature_maps: tuple
    q_coefs: tuple  # per-stage coefficient vectors of the optimal Q-functions
    optimal_regime: LinearRulePolicy
    responder_prob: float | None
    expected_max_stage2: float

    def q_values(self, stage: int, states) -> np.ndarray:
        return self.optimal_regime.q_values(stage, states)


def expected_max_affine(intercepts, slopes, n_nodes: int = 64) -> float:
    """``E max_a (c_a + s_a' Z)`` for ``Z ~ N(0, I)``.

    Closed form for one or two affine functions; otherwise Gauss-Hermite
    quadrature over the span of the slopes.
    """
    c = np.asarray(intercepts, dtype=float)
    S = np.atleast_2d(np.asarray(slopes, dtype=float)).reshape(c.shape[0], -1)
    if c.shape[0] == 1:
        return float(c[0])
    if c.shape[0] == 2:
        u = c[1] - c[0]
        s = float(np.linalg.norm(S[1] - S[0]))
        if s == 0.0:
            return float(c[0] + max(u, 0.0))
        return float(c[0] + u * norm.cdf(u / s) + s * norm.pdf(u / s))
    _, sv, vt = np.linalg.svd(S, full_matrices=False)
    r = int(np.sum(sv > 1e-12 * max(1.0, sv.max(initial=0.0))))
    if r == 0:
        return float(c.max())
    if r > 3:
        raise NotImplementedError("quadrature implemented for slope rank <= 3")
    proj = S @ vt[:r].T  # scores depend on Z only through V'Z ~ N(0, I_r)
    nodes, weights = roots_hermitenorm(n_nodes)
    weights = weights / weights.sum()
    total = 0.0
    for idx in itertools.product(range(n_nodes), repeat=r):
        z = nodes[list(idx)]
        total += np.prod(weights[list(idx)]) * np.max(c + proj @ z)
    return float(total)


def smart_truth(cfg: SmartConfig) -> SmartTruth:
    cfg.validate()
    c1 = np.asarray(cfg.stage1_coefs, dtype=float)
    c2 = np.asarray(cfg.stage2_coefs, dtype=float)
    shared = np.asarray(cfg.stage2_shared, dtype=float)
    eta0, eta_x, eta_y = shared[0], shared[1:cfg.p + 1], shared[cfg.p + 1]
    g = cfg.gamma
    m = expected_max_affine(c2[:, 0], c2[:, 1:])
    theta2 = np.concatenate([eta_x, [eta_y], (c2 + np.r_[eta0, np.zeros(cfg.q)]).ravel()])
    rows = c1 * (1.0 + g * eta_y) + g * np.r_[eta0 + m, eta_x]
    theta1 = rows.ravel()
    fms = cfg.feature_maps()
    resp = None
    if cfg.stage1_logits is None:
        probs = np.asarray(cfg.stage1_probs, dtype=float)
        scale = np.sqrt(np.sum(c1[:, 1:] ** 2, axis=1) + cfg.noise_sd1 ** 2)
        resp = float(np.sum(probs * norm.sf((cfg.responder_threshold - c1[:, 0]) / scale)))
    return SmartTruth(fms, (theta1, theta2), LinearRulePolicy(fms, [theta1, theta2]), resp, m)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _draw_rows(P: np.ndarray, rng: RngStream) -> np.ndarray:
    u = rng.random(P.shape[0])
    cdf = np.cumsum(P, axis=1)
    a = (u[:, None] * cdf[:, -1:] >= cdf).sum(axis=1)
    return np.minimum(a, P.shape[1] - 1)


def simulate_smart(cfg: SmartConfig, n: int, rng: RngStream) -> tuple[Dataset, SmartTruth]:
    """Draw ``n`` two-stage trajectories and the matching ground truth."""
    cfg.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    p, q = cfg.p, cfg.q
    c1 = np.asarray(cfg.stage1_coefs, dtype=float)
    c2 = np.asarray(cfg.stage2_coefs, dtype=float)
    shared = np.asarray(cfg.stage2_shared, dtype=float)

    x0 = rng.standard_normal((n, p))
    h1 = np.column_stack([np.ones(n), x0])
    if cfg.stage1_logits is None:
        P1 = np.tile(np.asarray(cfg.stage1_probs, dtype=float), (n, 1))
    else:
        P1 = _softmax_rows(h1 @ np.asarray(cfg.stage1_logits, dtype=float).T)
    a0 = _draw_rows(P1, rng)
    y1 = np.sum(c1[a0] * h1, axis=1) + cfg.noise_sd1 * rng.standard_normal(n)
    responder = y1 >= cfg.responder_threshold

    x1 = rng.standard_normal((n, q))
    h2 = np.column_stack([np.ones(n), x1])
    k2 = cfg.k2
    if cfg.stage2_logits is None:
        P2 = np.where(responder[:, None], np.asarray(cfg.stage2_probs_responders, dtype=float),
                      np.asarray(cfg.stage2_probs_nonresponders, dtype=float))
    else:
        P2 = _softmax_rows(h2 @ np.asarray(cfg.stage2_logits, dtype=float).T)
    if not cfg.rerandomize_responders:
        stay = np.zeros(k2)
        stay[0] = 1.0
        P2 = np.where(responder[:, None], stay, P2)
    a1 = _draw_rows(P2, rng)
    y2 = (np.column_stack([np.ones(n), x0, y1]) @ shared + np.sum(c2[a1] * h2, axis=1)
          + cfg.noise_sd2 * rng.standard_normal(n))

    s2 = np.column_stack([x0, y1, responder.astype(float), x1])
    rows = np.arange(n)
    data = dataset_from_arrays(
        [x0, s2], np.column_stack([a0, a1]), np.column_stack([y1, y2]),
        np.column_stack([P1[rows, a0], P2[rows, a1]]), [cfg.k1, k2])
    return data, smart_truth(cfg)


# --------------------------------------------------------------------------
# MRT


@dataclass(frozen=True)
class MrtConfig:
    """Daily micro-randomized messaging trial.

    Mean reward of arm ``a`` on a day with context ``x`` and recovery vector
    ``zbar`` is ``arm_coefs[a] . [1, x] + habituation[a] * zbar_a``. Contexts
    are i.i.d. ``N(context_mean, diag(context_sd^2))``. ``missing_prob`` models
    days whose step count is recorded as 0 and therefore flagged MISSING.
    """

    n_arms: int = 2
    horizon: int = 100
    z_max: int = 7
    context_mean: tuple = ()
    context_sd: tuple = ()
    arm_coefs: tuple = ((1.0,), (0.4,))
    habituation: tuple = (0.0, 0.0)
    noise_sd: float = 1.0
    missing_prob: float = 0.0
    burn_in_days: int = 0

    def violations(self) -> list[str]:
        v = []
        p = len(self.context_mean)
        if self.n_arms < 1:
            v.append("n_arms must be >= 1")
        if self.horizon < 1:
            v.append("horizon must be >= 1")
        if self.z_max < 1:
            v.append("z_max must be >= 1")
        if len(self.context_sd) != p:
            v.append("context_sd must match context_mean in length")
        elif any(s < 0 for s in self.context_sd):
            v.append("context_sd entries must be >= 0")
        if np.asarray(self.arm_coefs, dtype=float).shape != (self.n_arms, p + 1):
            v.append(f"arm_coefs must have shape ({self.n_arms}, {p + 1})")
        if len(self.habituation) != self.n_arms:
            v.append("habituation needs one coefficient per arm")
        if not self.noise_sd > 0:
            v.append("noise_sd must be > 0")
        if not 0.0 <= self.missing_prob < 1.0:
            v.append("missing_prob must lie in [0, 1)")
        if self.burn_in_days < 0:
            v.append("burn_in_days must be >= 0")
        return v

    def validate(self) -> "MrtConfig":
        v = self.violations()
        if v:
            raise ConfigError(v)
        return self

    @property
    def context_dim(self) -> int:
        return len(self.context_mean)

    def feature_map(self) -> RecoveryMap:
        return RecoveryMap(self.n_arms, self.context_dim)

    def true_beta(self) -> np.ndarray:
        """Reward coefficients in the :class:`RecoveryMap` layout."""
        c = np.asarray(self.arm_coefs, dtype=float)
        return np.column_stack([c, np.asarray(self.habituation, dtype=float)]).ravel()

    def mean_rewards(self, x, z_bar) -> np.ndarray:
        c = np.asarray(self.arm_coefs, dtype=float)
        return c[:, 0] + c[:, 1:] @ np.asarray(x, dtype=float) + np.asarray(self.habituation) * z_bar


def recovery_features(x: np.ndarray, z_bar: np.ndarray, n_arms: int) -> np.ndarray:
    """All-arm :class:`RecoveryMap` features for one day, shape ``(K, K*(p+2))``."""
    p = x.shape[0]
    b = p + 2
    out = np.zeros((n_arms, n_arms * b))
    for a in range(n_arms):
        out[a, a * b] = 1.0
        out[a, a * b + 1:a * b + 1 + p] = x
        out[a, a * b + 1 + p] = z_bar[a]
    return out


@dataclass
class MrtResult:
    dataset: Dataset | None
    trace: dict[str, np.ndarray]  # user, day, chosen_arm, regret, cum_regret, optimal
    agents: list = field(default_factory=list)

    def cum_regret_per_user(self) -> np.ndarray:
        users = self.trace["user"]
        return np.array([self.trace["regret"][users == u].sum() for u in np.unique(users)])

    def pct_optimal(self) -> float:
        return float(np.mean(self.trace["optimal"]))


TRACE_COLUMNS = ("user", "day", "chosen_arm", "regret", "cum_regret")


def simulate_mrt(cfg: MrtConfig, policy, n_users: int, rng: RngStream, *,
                 record_dataset: bool = True) -> MrtResult:
    """Run ``n_users`` independent users for ``cfg.horizon`` days.

    ``policy`` is a :class:`PolicySpec` (queried with ``stage = day``), or a
    callable ``factory(user) -> agent`` where the agent exposes
    ``select(features, rng, state) -> (arm, prob)`` and ``update(features, reward)``
    (``reward`` is None when MISSING). Days before the burn-in ends are
    assigned uniformly at random with probability exactly ``1/K``.

    Randomness is split per user into an environment stream (contexts, noise,
    missingness) and a policy stream, so two policies run with the same
    ``rng`` face identical environments.
    """
    cfg.validate()
    K, T, p = cfg.n_arms, cfg.horizon, cfg.context_dim
    is_spec = isinstance(policy, PolicySpec)
    if is_spec and policy.n_arms(0) != K:
        raise SchemaError(f"policy has {policy.n_arms(0)} arms, environment has {K}")
    cmat = np.asarray(cfg.arm_coefs, dtype=float)
    hab = np.asarray(cfg.habituation, dtype=float)
    mean = np.asarray(cfg.context_mean, dtype=float)
    sd = np.asarray(cfg.context_sd, dtype=float)
    uniform = 1.0 / K

    cols = {c: [] for c in ("user", "day", "chosen_arm", "regret", "cum_regret", "optimal")}
    trajectories = []
    agents = []
    for u in range(n_users):
        env_rng = rng.child(f"user{u}/env")
        pol_rng = rng.child(f"user{u}/policy")
        X = mean + sd * env_rng.standard_normal((T, p))
        noise = cfg.noise_sd * env_rng.standard_normal(T)
        miss = env_rng.random(T) < cfg.missing_prob
        agent = None if is_spec else policy(u)
        if agent is not None:
            if getattr(agent, "n_arms", K) != K:
                raise SchemaError(f"agent has {agent.n_arms} arms, environment has {K}")
            agents.append(agent)
        burn_in = max(cfg.burn_in_days, getattr(agent, "burn_in", 0) or 0)

        z = np.full(K, cfg.z_max, dtype=int)
        states = np.empty((T, p + K))
        actions = np.empty(T, dtype=int)
        probs = np.empty(T)
        rewards = np.empty(T)
        regret = np.empty(T)
        optimal = np.empty(T, dtype=bool)
        for t in range(T):
            z_bar = (cfg.z_max - z).astype(float)
            x = X[t]
            states[t, :p] = x
            states[t, p:] = z_bar
            mu = cmat[:, 0] + cmat[:, 1:] @ x + hab * z_bar
            feats = None
            if t < burn_in:
                a = int(pol_rng.integers(0, K))
                prob = uniform
            elif is_spec:
                pr = policy.probs(t, states[t:t + 1])[0]
                a = pol_rng.choice_index(pr)
                prob = float(pr[a])
            else:
                feats = recovery_features(x, z_bar, K)
                a, prob = agent.select(feats, pol_rng, states[t])
            y = mu[a] + noise[t]
            if agent is not None:
                if feats is None:
                    feats = recovery_features(x, z_bar, K)
                agent.update(feats[a], None if miss[t] else y)
            actions[t] = a
            probs[t] = prob
            rewards[t] = np.nan if miss[t] else y
            best = mu.max()
            regret[t] = best - mu[a]
            optimal[t] = mu[a] >= best
            z = np.minimum(cfg.z_max, z + 1)
            z[a] = 0
        cols["user"].append(np.full(T, u))
        cols["day"].append(np.arange(T))
        cols["chosen_arm"].append(actions)
        cols["regret"].append(regret)
        cols["cum_regret"].append(np.cumsum(regret))
        cols["optimal"].append(optimal)
        if record_dataset:
            recs = tuple(StageRecord(states[t], int(actions[t]),
                                     MISSING if miss[t] else float(rewards[t]), float(probs[t]))
                         for t in range(T))
            trajectories.append(Trajectory(recs, u))
    trace = {k: np.concatenate(v) for k, v in cols.items()}
    data = Dataset(tuple(trajectories), Schema.indefinite(K, p + K)) if record_dataset else None
    return MrtResult(data, trace, agents)


def write_regret_trace(trace: dict[str, np.ndarray], path, extra: dict[str, Any] | None = None) -> None:
    """CSV with columns ``[*extra], user, day, chosen_arm, regret, cum_regret``."""
    extra = extra or {}
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*extra, *TRACE_COLUMNS])
        prefix = list(extra.values())
        for i in range(trace["user"].shape[0]):
            w.writerow([*prefix, int(trace["user"][i]), int(trace["day"][i]), int(trace["chosen_arm"][i]),
                        repr(float(trace["regret"][i])), repr(float(trace["cum_regret"][i]))])
