"""Online contextual-bandit agents and regret accounting.

Agents consume per-arm feature rows (shape ``(K, d)``) and expose
``select(features, rng, state=None) -> (arm, prob)`` plus
``update(chosen_features, reward)``; ``reward=None`` marks a MISSING outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from .core import Dataset, MISSING, argmax_lowest
from .errors import ConsistencyError, FactorizationError, MissingRewardError, ParameterError, SchemaError
from .features import FeatureMap, LinearArmMap, StateFeatures, feature_map_from_dict
from .numerics import RngStream, cholesky, inv_spd, ridge_fit, sample_inverse_gamma, solve_spd

THETA_MAX = 20.0


def _arm_matrix(arm_features, d: int) -> np.ndarray:
    F = np.atleast_2d(np.asarray(arm_features, dtype=float))
    if F.shape[1] != d:
        raise SchemaError(f"arm features have length {F.shape[1]}, model dimension is {d}")
    return F


def immediate_regret(true_means, chosen: int) -> float:
    """``max_a mu_a - mu_chosen``."""
    mu = np.asarray(true_means, dtype=float)
    return float(mu.max() - mu[chosen])


# --------------------------------------------------------------------------
# Linear UCB / Thompson sampling


@dataclass
class LinBanditState:
    """Ridge sufficient statistics ``B = lam I + sum phi phi'`` and ``b = sum phi y``."""

    B: np.ndarray
    b_vec: np.ndarray
    lambda_ridge: float = 1.0
    t: int = 0

    @classmethod
    def fresh(cls, dim: int, lambda_ridge: float = 1.0) -> "LinBanditState":
        if not lambda_ridge > 0:
            raise ParameterError("lambda_ridge must be > 0")
        return cls(lambda_ridge * np.eye(dim), np.zeros(dim), float(lambda_ridge), 0)

    @property
    def dim(self) -> int:
        return self.b_vec.shape[0]

    def mean(self) -> np.ndarray:
        return solve_spd(self.B, self.b_vec)

    def copy(self) -> "LinBanditState":
        return LinBanditState(self.B.copy(), self.b_vec.copy(), self.lambda_ridge, self.t)

    def to_dict(self) -> dict:
        return {"B": self.B.tolist(), "b_vec": self.b_vec.tolist(), "lambda_ridge": self.lambda_ridge, "t": self.t}

    @classmethod
    def from_dict(cls, d: dict) -> "LinBanditState":
        return cls(np.array(d["B"], dtype=float), np.array(d["b_vec"], dtype=float), d["lambda_ridge"], d["t"])


def linucb_select(state: LinBanditState, arm_features, alpha: float) -> tuple[int, np.ndarray]:
    """Arm maximizing ``phi' mu + alpha sqrt(phi' B^-1 phi)`` and the UCB vector."""
    if alpha < 0:
        raise ParameterError("alpha must be >= 0")
    F = _arm_matrix(arm_features, state.dim)
    L = cholesky(state.B)
    mu = scipy.linalg.cho_solve((L, True), state.b_vec, check_finite=False)
    V = scipy.linalg.solve_triangular(L, F.T, lower=True, check_finite=False)
    ucb = F @ mu + alpha * np.sqrt(np.sum(V * V, axis=0))
    return int(argmax_lowest(ucb)), ucb


def lin_bandit_update(state: LinBanditState, chosen_features, reward: float, inplace: bool = False) -> LinBanditState:
    """``B += phi phi'``, ``b += phi y``, ``t += 1``."""
    if reward is None or reward is MISSING:
        raise MissingRewardError("impute MISSING rewards before updating")
    phi = np.asarray(chosen_features, dtype=float)
    if phi.shape != (state.dim,):
        raise SchemaError(f"feature vector has shape {phi.shape}, expected ({state.dim},)")
    out = state if inplace else state.copy()
    out.B += np.outer(phi, phi)
    out.b_vec += phi * float(reward)
    out.t += 1
    return out


def _lints_draws(state: LinBanditState, nu: float, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draws of ``mu ~ N(B^-1 b, nu^2 B^-1)``; rows when ``size`` is given."""
    L = cholesky(state.B)
    mu = scipy.linalg.cho_solve((L, True), state.b_vec, check_finite=False)
    if nu == 0:
        return mu if size is None else np.tile(mu, (size, 1))
    z = rng.standard_normal(state.dim if size is None else (state.dim, size))
    # L' x = z gives x ~ N(0, B^-1)
    x = scipy.linalg.solve_triangular(L.T, z, lower=False, check_finite=False)
    return mu + nu * x if size is None else (mu[:, None] + nu * x).T


def lints_select(state: LinBanditState, arm_features, nu: float, rng: RngStream) -> int:
    """Thompson draw ``mu ~ N(mu_hat, nu^2 B^-1)`` then ``argmax_a phi_a' mu``.

    ``nu = 0`` is the degenerate draw at the posterior mean.
    """
    if nu < 0:
        raise ParameterError("nu must be >= 0")
    F = _arm_matrix(arm_features, state.dim)
    return int(argmax_lowest(F @ _lints_draws(state, nu, rng)))


# --------------------------------------------------------------------------
# Normal-inverse-gamma Thompson sampling


@dataclass(frozen=True)
class NIGPosterior:
    """``sigma^2 ~ IG(a, b)``, ``beta | sigma^2 ~ N(mu, sigma^2 Sigma)``."""

    mu: np.ndarray
    Sigma: np.ndarray
    a: float
    b: float
    _chol: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if S.shape != (mu.shape[0], mu.shape[0]):
            raise SchemaError(f"Sigma has shape {S.shape}, mean has length {mu.shape[0]}")
        if not (self.a > 0 and self.b > 0):
            raise ParameterError(f"need a > 0 and b > 0, got a={self.a}, b={self.b}")
        try:
            L = cholesky(S)
        except FactorizationError as exc:
            raise ParameterError(f"Sigma must be positive definite ({exc})") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "_chol", L)

    @classmethod
    def default(cls, dim: int, scale: float = 1.0, a: float = 1.0, b: float = 1.0) -> "NIGPosterior":
        return cls(np.zeros(dim), scale * np.eye(dim), a, b)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def __eq__(self, other):
        return (isinstance(other, NIGPosterior) and np.array_equal(self.mu, other.mu)
                and np.array_equal(self.Sigma, other.Sigma) and self.a == other.a and self.b == other.b)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "Sigma": self.Sigma.tolist(), "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "NIGPosterior":
        return cls(np.array(d["mu"], dtype=float), np.array(d["Sigma"], dtype=float), d["a"], d["b"])


def nig_update(prior: NIGPosterior, X, y, n: int | None = None) -> NIGPosterior:
    """Conjugate update with ``n`` rows of design ``X`` and rewards ``y``."""
    X = np.asarray(X, dtype=float).reshape(-1, prior.dim)
    y = np.asarray(y, dtype=float).reshape(-1)
    if n is not None and n != X.shape[0]:
        raise SchemaError(f"n={n} but X has {X.shape[0]} rows")
    if X.shape[0] != y.shape[0]:
        raise SchemaError("X and y have different row counts")
    if X.shape[0] == 0:
        return prior
    P0 = inv_spd(prior.Sigma)
    P = P0 + X.T @ X
    P = 0.5 * (P + P.T)
    rhs = P0 @ prior.mu + X.T @ y
    mu = solve_spd(P, rhs)
    Sigma = inv_spd(P)
    a = prior.a + X.shape[0] / 2.0
    b = prior.b + 0.5 * (prior.mu @ P0 @ prior.mu + y @ y - mu @ P @ mu)
    if not b > 0:
        raise ConsistencyError(f"posterior scale b* = {b} is not positive")
    return NIGPosterior(mu, Sigma, a, b)


def _nig_draws(post: NIGPosterior, rng: RngStream, size: int | None = None) -> np.ndarray:
    sigma2 = sample_inverse_gamma(post.a, post.b, rng, size)
    z = rng.standard_normal(post.dim if size is None else (size, post.dim))
    if size is None:
        return post.mu + np.sqrt(sigma2) * (post._chol @ z)
    return post.mu + np.sqrt(sigma2)[:, None] * (z @ post._chol.T)


def nig_ts_select(post: NIGPosterior, arm_features, rng: RngStream, greedy: bool = False) -> int:
    """Draw ``sigma^2 ~ IG(a, b)``, ``beta ~ N(mu, sigma^2 Sigma)``; return
    ``argmax_a f_a' beta``. ``greedy=True`` uses ``beta = mu`` (exploitation limit)."""
    F = _arm_matrix(arm_features, post.dim)
    beta = post.mu if greedy else _nig_draws(post, rng)
    return int(argmax_lowest(F @ beta))


# --------------------------------------------------------------------------
# Actor-critic


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ActorCriticState:
    """Logistic policy ``pi(1|x) = sigmoid(g(x)' theta)`` with a ridge critic."""

    theta: np.ndarray
    critic: np.ndarray
    pi_min: float
    alpha_cc: float
    lagrange: float
    ridge_lambda: float
    policy_features: StateFeatures
    reward_features: FeatureMap | None
    status: str = "OK"  # or "UNBOUNDED" when theta sits on the box
    violation_fraction: float = 0.0
    n_iter: int = 0

    def __post_init__(self):
        if not 0 < self.pi_min < 0.5:
            raise ParameterError("pi_min must lie in (0, 0.5)")
        if not 0 < self.alpha_cc < 1:
            raise ParameterError("alpha_cc must lie in (0, 1)")
        if self.lagrange < 0:
            raise ParameterError("lagrange multiplier must be >= 0")

    def prob_arm1(self, states) -> np.ndarray:
        return _sigmoid(self.policy_features(states) @ self.theta)

    @property
    def constraint_satisfied(self) -> bool:
        return self.violation_fraction <= self.alpha_cc

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "critic": self.critic.tolist(), "pi_min": self.pi_min,
                "alpha_cc": self.alpha_cc, "lagrange": self.lagrange, "ridge_lambda": self.ridge_lambda,
                "policy_features": self.policy_features.to_dict(),
                "reward_features": None if self.reward_features is None else self.reward_features.to_dict(),
                "status": self.status, "violation_fraction": self.violation_fraction, "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d: dict) -> "ActorCriticState":
        d = dict(d)
        d["theta"] = np.array(d["theta"], dtype=float)
        d["critic"] = np.array(d["critic"], dtype=float)
        d["policy_features"] = feature_map_from_dict(d["policy_features"])
        if d["reward_features"] is not None:
            d["reward_features"] = feature_map_from_dict(d["reward_features"])
        return cls(**d)


def actor_objective(theta, G, E0, delta, lagrange):
    """``P_N[E0 + delta * pi(1|x)] - lagrange * theta' P_N[g g'] theta``."""
    z = G @ theta
    return float(np.mean(E0 + delta * _sigmoid(z)) - lagrange * np.mean(z * z))


def _actor_optimize(G, E0, delta, lagrange, theta_max=THETA_MAX, theta0=None, max_iter=10_000, tol=1e-12):
    """Projected gradient ascent on the box ``|theta_j| <= theta_max`` with
    Armijo backtracking (step doubles after each accepted move)."""
    n, k = G.shape
    gram = G.T @ G / n
    theta = np.zeros(k) if theta0 is None else np.clip(np.asarray(theta0, dtype=float), -theta_max, theta_max)

    def grad(th):
        s = _sigmoid(G @ th)
        return G.T @ (delta * s * (1.0 - s)) / n - 2.0 * lagrange * gram @ th

    J = actor_objective(theta, G, E0, delta, lagrange)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(theta)
        moved = False
        while step > 1e-16:
            cand = np.clip(theta + step * g, -theta_max, theta_max)
            diff = cand - theta
            if not diff.any():
                break
            Jc = actor_objective(cand, G, E0, delta, lagrange)
            if Jc >= J + 1e-4 * (g @ diff):
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        theta, J = cand, Jc
        step = min(step * 2.0, 1e6)
        if np.max(np.abs(diff)) < tol:
            break
    g = grad(theta)
    on_box = (np.abs(theta) >= theta_max) & (np.sign(g) == np.sign(theta)) & (g != 0)
    return theta, ("UNBOUNDED" if on_box.any() else "OK"), it


def actor_critic_fit(data: Dataset, policy_features: StateFeatures | None = None,
                     reward_features: FeatureMap | None = None, pi_min: float = 0.1, alpha_cc: float = 0.1,
                     lagrange: float = 0.1, ridge_lambda: float = 1.0, theta_max: float = THETA_MAX,
                     max_iter: int = 10_000) -> ActorCriticState:
    """Ridge critic for ``E(Y | x, a)`` and an actor maximizing the penalized
    average reward over logistic policies, with ``theta`` boxed at
    ``+-theta_max`` (status ``UNBOUNDED`` when the optimum sits on the box).

    Records from every stage are pooled. The fraction of training contexts with
    ``pi(1|x)`` outside ``[pi_min, 1 - pi_min]`` is reported, not enforced.
    """
    recs = [r for tr in data.trajectories for r in tr.records]
    if any(r.reward is MISSING for r in recs):
        raise MissingRewardError("impute MISSING rewards before fitting")
    S = np.array([r.state for r in recs], dtype=float)
    A = np.array([r.action for r in recs], dtype=int)
    Y = np.array([r.reward for r in recs], dtype=float)
    if np.any((A != 0) & (A != 1)) or any(data.schema.arms_at(t) != 2 for t in range(data.horizon or 1)):
        raise SchemaError("actor-critic needs binary actions coded 0/1")
    p = S.shape[1]
    policy_features = policy_features or StateFeatures(p)
    if reward_features is None:
        reward_features = LinearArmMap(2, p)
    mu = ridge_fit(reward_features(S, A), Y, ridge_lambda)
    n = S.shape[0]
    E0 = reward_features(S, np.zeros(n, dtype=int)) @ mu
    E1 = reward_features(S, np.ones(n, dtype=int)) @ mu
    G = policy_features(S)
    theta, status, it = _actor_optimize(G, E0, E1 - E0, lagrange, theta_max, max_iter=max_iter)
    p1 = _sigmoid(G @ theta)
    viol = float(np.mean((p1 < pi_min) | (p1 > 1 - pi_min)))
    return ActorCriticState(theta, mu, pi_min, alpha_cc, lagrange, ridge_lambda, policy_features,
                            reward_features, status, viol, it)


# --------------------------------------------------------------------------
# Agents


class BanditAgent:
    """Base class: uniform exploration during burn-in, MISSING handling.

    ``missing="skip"`` leaves the statistics untouched on a MISSING reward;
    ``missing="locf"`` updates with the last observed reward (0 before any).
    """

    kind = "abstract"

    def __init__(self, n_arms: int, burn_in: int = 0, missing: str = "skip"):
        if n_arms < 1:
            raise ParameterError("n_arms must be >= 1")
        if burn_in < 0:
            raise ParameterError("burn_in must be >= 0")
        if missing not in ("skip", "locf"):
            raise ParameterError("missing must be 'skip' or 'locf'")
        self.n_arms = int(n_arms)
        self.burn_in = int(burn_in)
        self.missing = missing
        self.t = 0
        self.last_reward = 0.0

    def select(self, features, rng: RngStream, state=None) -> tuple[int, float]:
        raise NotImplementedError

    def _learn(self, phi: np.ndarray, reward: float) -> None:
        pass

    def update(self, chosen_features, reward) -> None:
        self.t += 1
        if reward is None or reward is MISSING:
            if self.missing == "skip":
                return
            reward = self.last_reward
        else:
            self.last_reward = float(reward)
        self._learn(np.asarray(chosen_features, dtype=float), float(reward))

    def params(self) -> dict:
        return {"n_arms": self.n_arms, "burn_in": self.burn_in, "missing": self.missing}

    def _state(self) -> dict:
        return {}

    def _load(self, d: dict) -> None:
        pass

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "t": self.t, "last_reward": self.last_reward,
                "state": self._state()}

    @classmethod
    def from_dict(cls, d: dict) -> "BanditAgent":
        agent = AGENTS[d["kind"]](**d["params"])
        agent.t = d["t"]
        agent.last_reward = d["last_reward"]
        agent._load(d["state"])
        return agent


class UniformAgent(BanditAgent):
    kind = "uniform"

    def select(self, features, rng, state=None):
        return int(rng.integers(0, self.n_arms)), 1.0 / self.n_arms


class StaticAgent(BanditAgent):
    """Always sends the same arm (control group)."""

    kind = "static"

    def __init__(self, n_arms: int, arm: int = 0, burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, burn_in, missing)
        if not 0 <= arm < n_arms:
            raise ParameterError("arm outside 0..n_arms-1")
        self.arm = int(arm)

    def select(self, features, rng, state=None):
        return self.arm, 1.0

    def params(self):
        return {**super().params(), "arm": self.arm}


class _LinAgent(BanditAgent):
    def __init__(self, n_arms: int, dim: int, lam: float = 1.0, burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, burn_in, missing)
        self.dim = int(dim)
        self.lam = float(lam)
        self.stats = LinBanditState.fresh(dim, lam)

    def _learn(self, phi, reward):
        lin_bandit_update(self.stats, phi, reward, inplace=True)

    def params(self):
        return {**super().params(), "dim": self.dim, "lam": self.lam}

    def _state(self):
        return self.stats.to_dict()

    def _load(self, d):
        self.stats = LinBanditState.from_dict(d)


class LinUCBAgent(_LinAgent):
    kind = "linucb"

    def __init__(self, n_arms, dim, alpha: float = 1.0, lam: float = 1.0, burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, dim, lam, burn_in, missing)
        self.alpha = float(alpha)

    def select(self, features, rng, state=None):
        arm, _ = linucb_select(self.stats, features, self.alpha)
        return arm, 1.0

    def params(self):
        return {**super().params(), "alpha": self.alpha}


class LinTSAgent(_LinAgent):
    """Linear Thompson sampling with ``B_0 = lam I`` (identity by default).

    The logged selection probability is a Monte Carlo estimate
    ``(1 + hits) / (1 + n_prob_draws)`` from extra posterior draws, so it is
    always in (0, 1]; ``n_prob_draws = 0`` logs NaN (no dataset can be built).
    """

    kind = "lints"

    def __init__(self, n_arms, dim, nu: float = 1.0, lam: float = 1.0, n_prob_draws: int = 100,
                 burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, dim, lam, burn_in, missing)
        self.nu = float(nu)
        self.n_prob_draws = int(n_prob_draws)

    def select(self, features, rng, state=None):
        F = _arm_matrix(features, self.dim)
        arm = int(argmax_lowest(F @ _lints_draws(self.stats, self.nu, rng)))
        if self.n_prob_draws == 0:
            return arm, float("nan")
        draws = _lints_draws(self.stats, self.nu, rng, self.n_prob_draws)
        hits = int(np.sum(argmax_lowest(draws @ F.T, axis=1) == arm))
        return arm, (1.0 + hits) / (1.0 + self.n_prob_draws)

    def params(self):
        return {**super().params(), "nu": self.nu, "n_prob_draws": self.n_prob_draws}


class NigTSAgent(BanditAgent):
    """Thompson sampling under the normal-inverse-gamma conjugate model."""

    kind = "nig_ts"

    def __init__(self, n_arms, dim, prior_scale: float = 1.0, a0: float = 1.0, b0: float = 1.0,
                 prior_mean=None, greedy: bool = False, n_prob_draws: int = 100,
                 burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, burn_in, missing)
        self.dim = int(dim)
        self.prior_scale, self.a0, self.b0 = float(prior_scale), float(a0), float(b0)
        self.prior_mean = None if prior_mean is None else [float(v) for v in prior_mean]
        self.greedy = bool(greedy)
        self.n_prob_draws = int(n_prob_draws)
        mean = np.zeros(dim) if prior_mean is None else np.asarray(prior_mean, dtype=float)
        self.posterior = NIGPosterior(mean, prior_scale * np.eye(dim), a0, b0)

    def select(self, features, rng, state=None):
        F = _arm_matrix(features, self.dim)
        arm = nig_ts_select(self.posterior, F, rng, self.greedy)
        if self.greedy:
            return arm, 1.0
        if self.n_prob_draws == 0:
            return arm, float("nan")
        draws = _nig_draws(self.posterior, rng, self.n_prob_draws)
        hits = int(np.sum(argmax_lowest(draws @ F.T, axis=1) == arm))
        return arm, (1.0 + hits) / (1.0 + self.n_prob_draws)

    def _learn(self, phi, reward):
        self.posterior = nig_update(self.posterior, phi[None, :], [reward])

    def params(self):
        return {**super().params(), "dim": self.dim, "prior_scale": self.prior_scale, "a0": self.a0, "b0": self.b0,
                "prior_mean": self.prior_mean, "greedy": self.greedy, "n_prob_draws": self.n_prob_draws}

    def _state(self):
        return self.posterior.to_dict()

    def _load(self, d):
        self.posterior = NIGPosterior.from_dict(d)


class ActorCriticAgent(BanditAgent):
    """Two-arm actor-critic, refitted every ``refit_every`` updates.

    The critic is ridge regression on the chosen feature rows; the actor
    maximizes the penalized average reward over the contexts seen so far.
    Policy features are ``[1, state]``. Online sampling clips ``pi(1|x)`` to
    ``[pi_min, 1 - pi_min]`` so exploration never stops.
    """

    kind = "actor_critic"

    def __init__(self, n_arms, dim, state_dim: int, pi_min: float = 0.1, alpha_cc: float = 0.1,
                 lagrange: float = 0.1, ridge_lambda: float = 1.0, refit_every: int = 100,
                 burn_in: int = 0, missing: str = "skip"):
        super().__init__(n_arms, burn_in, missing)
        if n_arms != 2:
            raise SchemaError("actor-critic agent supports exactly two arms")
        if not 0 < pi_min < 0.5:
            raise ParameterError("pi_min must lie in (0, 0.5)")
        self.dim, self.state_dim = int(dim), int(state_dim)
        self.pi_min, self.alpha_cc, self.lagrange = float(pi_min), float(alpha_cc), float(lagrange)
        self.ridge_lambda, self.refit_every = float(ridge_lambda), int(refit_every)
        self.theta = np.zeros(state_dim + 1)
        self.critic = np.zeros(dim)
        self._ctx: list = []
        self._rows: list = []  # per-step (K, d) feature matrices
        self._phi: list = []
        self._y: list = []
        self._pending = None

    def select(self, features, rng, state=None):
        if state is None:
            raise SchemaError("actor-critic agent needs the state vector")
        g = np.r_[1.0, np.asarray(state, dtype=float)]
        p1 = float(np.clip(_sigmoid(g @ self.theta), self.pi_min, 1.0 - self.pi_min))
        arm = int(rng.random() < p1)
        self._pending = (g, np.asarray(features, dtype=float))
        return arm, (p1 if arm == 1 else 1.0 - p1)

    def update(self, chosen_features, reward):
        if self._pending is not None:
            self._ctx.append(self._pending[0])
            self._rows.append(self._pending[1])
            self._pending = None
        super().update(chosen_features, reward)
        if self.t % self.refit_every == 0 and self._y:
            self._refit()

    def _learn(self, phi, reward):
        self._phi.append(phi)
        self._y.append(reward)

    def _refit(self):
        self.critic = ridge_fit(np.array(self._phi), np.array(self._y), self.ridge_lambda)
        rows = np.array(self._rows)
        E = rows @ self.critic
        G = np.array(self._ctx)
        self.theta, _, _ = _actor_optimize(G, E[:, 0], E[:, 1] - E[:, 0], self.lagrange, theta0=self.theta,
                                           max_iter=200)

    def params(self):
        return {**super().params(), "dim": self.dim, "state_dim": self.state_dim, "pi_min": self.pi_min,
                "alpha_cc": self.alpha_cc, "lagrange": self.lagrange, "ridge_lambda": self.ridge_lambda,
                "refit_every": self.refit_every}

    def _state(self):
        return {"theta": self.theta.tolist(), "critic": self.critic.tolist(),
                "contexts": [c.tolist() for c in self._ctx], "rows": [r.tolist() for r in self._rows],
                "phi": [p.tolist() for p in self._phi], "y": list(self._y)}

    def _load(self, d):
        self.theta = np.array(d["theta"], dtype=float)
        self.critic = np.array(d["critic"], dtype=float)
        self._ctx = [np.array(c, dtype=float) for c in d["contexts"]]
        self._rows = [np.array(r, dtype=float) for r in d["rows"]]
        self._phi = [np.array(p, dtype=float) for p in d["phi"]]
        self._y = list(d["y"])


AGENTS = {cls.kind: cls for cls in (UniformAgent, StaticAgent, LinUCBAgent, LinTSAgent, NigTSAgent, ActorCriticAgent)}


def make_agent(kind: str, n_arms: int, dim: int, state_dim: int, **params: Any) -> BanditAgent:
    """Build an agent by name; ``dim`` is the per-arm feature length."""
    if kind not in AGENTS:
        raise ParameterError(f"unknown agent {kind!r}; choose from {sorted(AGENTS)}")
    cls = AGENTS[kind]
    if kind in ("uniform", "static"):
        return cls(n_arms, **params)
    if kind == "actor_critic":
        return cls(n_arms, dim, state_dim, **params)
    return cls(n_arms, dim, **params)
