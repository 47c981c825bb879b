"""Direct policy search.

Value estimators (importance weighted, self-normalized, augmented),
soft-max policy search, outcome-weighted classification (single stage,
backward and simultaneous), and V-learning for indefinite horizons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (MISSING, Dataset, PolicySpec, SignRulePolicy, SoftmaxPolicy, target_probs_of_actions,
                   returns_to_go)
from .errors import (DegenerateOverlapError, MissingRewardError, ParameterError, PositivityError,
                     SampleDepletionError, SchemaError)
from .features import StateFeatures
from .numerics import RngStream, cholesky, solve_spd

OWL_SHIFT_EPS = 1e-6
SOWL_BOX = 1e3

# --------------------------------------------------------------------------
# Value estimation


@dataclass(frozen=True)
class ValueEstimate:
    """Point estimate with importance-weight diagnostics.

    ``n_effective`` is Kish's ``(sum w)^2 / sum w^2``, which never exceeds ``n``.
    """

    point: float
    w_min: float
    w_mean: float
    w_max: float
    n_effective: float
    n: int
    std_error: float
    method: str
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "point": float(self.point), "std_error": float(self.std_error),
                "n": int(self.n), "n_effective": float(self.n_effective),
                "weights": {"min": float(self.w_min), "mean": float(self.w_mean), "max": float(self.w_max)},
                **({"meta": dict(self.meta)} if self.meta else {})}


def _summarize(method: str, point: float, w: np.ndarray, terms: np.ndarray, meta=None) -> ValueEstimate:
    n = w.shape[0]
    s2 = float(np.sum(w * w))
    n_eff = float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0
    se = float(np.std(terms, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return ValueEstimate(float(point), float(w.min()), float(w.mean()), float(w.max()), min(n_eff, float(n)),
                         n, se, method, dict(meta or {}))


def _check_target(data: Dataset, target: PolicySpec, T: int) -> None:
    for t in range(T):
        if target.n_arms(t) != data.schema.arms_at(t):
            raise SchemaError(f"stage {t}: target has {target.n_arms(t)} arms, data has {data.schema.arms_at(t)}")


def importance_weights(data: Dataset, target: PolicySpec, gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory weights ``prod_t d_t(A_t|X_t) / pi_t`` and discounted returns.

    Deterministic targets use the indicator ``1[A_t = d_t(X_t)]``.
    """
    if data.horizon is not None:
        T = data.horizon
        _check_target(data, target, T)
        w = np.ones(data.n)
        for t in range(T):
            st = data.stage(t)
            if np.any(st.behavior_prob <= 0):
                raise PositivityError(f"stage {t}: behavior_prob must be > 0")
            w = w * (target_probs_of_actions(target, t, st.states, st.actions) / st.behavior_prob)
        R = returns_to_go(data.complete_rewards(), gamma)[:, 0]
        return w, R
    w = np.ones(data.n)
    R = np.zeros(data.n)
    for i, tr in enumerate(data.trajectories):
        disc = 1.0
        for t, rec in enumerate(tr.records):
            if rec.reward is MISSING:
                raise MissingRewardError("MISSING reward in trajectory; impute before computing returns")
            d = target_probs_of_actions(target, t, rec.state[None, :], [rec.action])[0]
            w[i] *= d / rec.behavior_prob
            R[i] += disc * rec.reward
            disc *= gamma
    return w, R


def estimate_value_mc(data: Dataset, target: PolicySpec, gamma: float = 1.0) -> ValueEstimate:
    """``P_N[w Y]``; returns 0 when no trajectory is consistent with the target."""
    w, Y = importance_weights(data, target, gamma)
    terms = w * Y
    return _summarize("mc", np.mean(terms), w, terms)


def estimate_value_iptw(data: Dataset, target: PolicySpec, gamma: float = 1.0) -> ValueEstimate:
    """Self-normalized estimator ``P_N[w Y] / P_N[w]``."""
    w, Y = importance_weights(data, target, gamma)
    wbar = np.mean(w)
    if not wbar > 0:
        raise DegenerateOverlapError("no trajectory is consistent with the target policy (all weights 0)")
    point = np.mean(w * Y) / wbar
    return _summarize("iptw", point, w, w * (Y - point) / wbar + point)


def estimate_value_aiptw(data: Dataset, target: PolicySpec,
                         outcome_model: Callable[[np.ndarray, np.ndarray], np.ndarray],
                         propensity_model: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
                         ) -> ValueEstimate:
    """Doubly robust single-stage estimator.

    Averages ``w (Y - mu(H, A)) + sum_a d(a|H) mu(H, a)`` with
    ``w = d(A|H) / pi(A|H)``. For a deterministic rule this is
    ``1[A=d] Y / pi_d - (1[A=d] - pi_d) / pi_d * mu_d``.

    ``outcome_model(states, actions)`` returns ``mu`` per row;
    ``propensity_model(states, actions)`` returns ``pi(A|H)`` per row and
    defaults to the recorded behavior probabilities.
    """
    if data.require_fixed() != 1:
        raise SchemaError("AIPTW is implemented for single-stage data")
    _check_target(data, target, 1)
    st = data.stage(0)
    Y = data.complete_rewards()[:, 0]
    if propensity_model is None:
        pi = st.behavior_prob
    else:
        pi = np.asarray(propensity_model(st.states, st.actions), dtype=float)
        if np.any(pi <= 0) or np.any(pi >= 1):
            raise PositivityError("propensity model must return values in (0, 1)")
    d = target_probs_of_actions(target, 0, st.states, st.actions)
    w = d / pi
    n, K = st.actions.shape[0], data.schema.arms_at(0)
    mu_obs = np.asarray(outcome_model(st.states, st.actions), dtype=float)
    if target.deterministic:
        da = target.actions(0, st.states)
        mu_bar = np.asarray(outcome_model(st.states, da), dtype=float)
    else:
        P = target.probs(0, st.states)
        mu_bar = np.zeros(n)
        for a in range(K):
            mu_bar = mu_bar + P[:, a] * np.asarray(outcome_model(st.states, np.full(n, a)), dtype=float)
    terms = w * (Y - mu_obs) + mu_bar
    return _summarize("aiptw", np.mean(terms), w, terms)


# --------------------------------------------------------------------------
# Soft-max policy search


@dataclass
class SoftmaxSearchResult:
    psi: np.ndarray
    value: float
    policy: SoftmaxPolicy
    n_evaluations: int


def _stage_inputs(data: Dataset, intercept: bool):
    T = data.require_fixed()
    out = []
    for t in range(T):
        st = data.stage(t)
        X = np.column_stack([np.ones(data.n), st.states]) if intercept else st.states
        out.append((X, st.actions, st.behavior_prob))
    return out


def softmax_iptw_objective(data: Dataset, intercept: bool = True, gamma: float = 1.0):
    """Return ``f(psi)``, the IPTW value of the shared soft-max policy ``psi`` (K x p)."""
    stages = _stage_inputs(data, intercept)
    Y = returns_to_go(data.complete_rewards(), gamma)[:, 0]
    rows = np.arange(data.n)

    def value(psi: np.ndarray) -> float:
        w = np.ones(data.n)
        for X, A, pi in stages:
            s = -X @ psi.T
            s -= s.max(axis=1, keepdims=True)
            e = np.exp(s)
            w = w * (e[rows, A] / e.sum(axis=1)) / pi
        return float(np.sum(w * Y) / np.sum(w))

    return value


def policy_search_softmax(data: Dataset, n_arms: int | None = None, intercept: bool = True,
                          bounds: tuple[float, float] = (-10.0, 10.0), grid_step: float = 0.5,
                          tol: float = 1e-4, max_passes: int = 5, gamma: float = 1.0) -> SoftmaxSearchResult:
    """Maximize the IPTW value over the soft-max class.

    The first arm's row of ``psi`` is pinned at 0 (the class is invariant to a
    common shift). Search: coordinate-wise grid sweeps over ``bounds`` until a
    pass makes no change, then pattern search with halving steps down to
    ``tol``. Ties keep the earlier candidate.
    """
    T = data.require_fixed()
    K = data.schema.arms_at(0) if n_arms is None else n_arms
    if any(data.schema.arms_at(t) != K for t in range(T)):
        raise SchemaError("a shared soft-max policy needs the same arm count at every stage")
    p = data.schema.dim_at(0) + int(intercept)
    if any(data.schema.dim_at(t) + int(intercept) != p for t in range(T)):
        raise SchemaError("a shared soft-max policy needs the same state dimension at every stage")
    f = softmax_iptw_objective(data, intercept, gamma)
    lo, hi = bounds
    psi = np.zeros((K, p))
    free = [(k, j) for k in range(1, K) for j in range(p)]
    best = f(psi)
    evals = 1
    grid = np.arange(lo, hi + 0.5 * grid_step, grid_step)
    for _ in range(max_passes):
        changed = False
        for k, j in free:
            cur = psi[k, j]
            vals = []
            for g in grid:
                psi[k, j] = g
                vals.append(f(psi))
            evals += len(grid)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, psi[k, j], changed = vals[i], grid[i], True
            else:
                psi[k, j] = cur
        if not changed:
            break
    h = grid_step / 2
    while h >= tol:
        improved = False
        for k, j in free:
            for step in (h, -h):
                cand = min(hi, max(lo, psi[k, j] + step))
                old = psi[k, j]
                psi[k, j] = cand
                v = f(psi)
                evals += 1
                if v > best:
                    best, improved = v, True
                    break
                psi[k, j] = old
        if not improved:
            h /= 2
    return SoftmaxSearchResult(psi.copy(), best, SoftmaxPolicy(psi.copy(), intercept=intercept), evals)


# --------------------------------------------------------------------------
# Outcome-weighted learning


@dataclass
class LinearDecisionFn:
    """``f(h) = features(h) . coef``; arm +1 (index 1) when ``f > 0``, arm -1
    (index 0) otherwise, so ``sign(0) = -1``."""

    features: StateFeatures
    coef: np.ndarray
    meta: dict = field(default_factory=dict)
    trace: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape != (self.features.dim,):
            raise SchemaError("coefficient length does not match the feature dimension")
        if not np.all(np.isfinite(self.coef)):
            raise ValueError("decision function coefficients must be finite")

    def decision(self, states) -> np.ndarray:
        return self.features(states) @ self.coef

    def signs(self, states) -> np.ndarray:
        return np.where(self.decision(states) > 0, 1, -1)

    def arms(self, states) -> np.ndarray:
        return (self.decision(states) > 0).astype(int)

    def to_dict(self) -> dict:
        return {"features": self.features.to_dict(), "coefficients": [float(v) for v in self.coef],
                "meta": {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.meta.items()}}


def _standardize(Phi: np.ndarray, penalized: np.ndarray, has_intercept: bool):
    """Center (only with an intercept) and scale penalized columns."""
    mean = np.zeros(Phi.shape[1])
    scale = np.ones(Phi.shape[1])
    if has_intercept:
        mean[penalized] = Phi[:, penalized].mean(axis=0)
    sd = Phi[:, penalized].std(axis=0) if Phi.shape[0] > 1 else np.ones(int(penalized.sum()))
    scale[penalized] = np.where(sd > 0, sd, 1.0)
    return (Phi - mean) / scale, mean, scale


def _unstandardize(gam: np.ndarray, mean: np.ndarray, scale: np.ndarray, icol: int | None) -> np.ndarray:
    beta = gam / scale
    if icol is not None:
        beta[icol] = gam[icol] - np.sum(gam * mean / scale)
    return beta


def _hinge_objective(margins, w, gam, lam_j):
    return float(np.mean(w * np.maximum(0.0, 1.0 - margins)) + np.sum(lam_j * gam * gam))


def _owl_solve(Phi: np.ndarray, s: np.ndarray, w: np.ndarray, lam: float, icol: int | None,
               n_iter: int, step0: float):
    """Proximal subgradient descent on the weighted hinge objective.

    Works in standardized coordinates (an exact reparametrization: per-column
    penalties absorb the scaling) with steps ``step0 / sqrt(k + 1)`` and
    returns the best iterate together with the running best objective.
    """
    d = Phi.shape[1]
    wbar = float(np.mean(w))
    if wbar == 0.0:
        return np.zeros(d), 0.0, np.zeros(1)
    w = w / wbar
    penalized = np.ones(d, dtype=bool)
    if icol is not None:
        penalized[icol] = False
    Z, mean, scale = _standardize(Phi, penalized, icol is not None)
    lam_j = np.where(penalized, (lam / wbar) / scale ** 2, 0.0)
    ws = w * s
    n = Phi.shape[0]
    gam = np.zeros(d)
    best_gam, best_obj = gam.copy(), np.inf
    trace = np.empty(n_iter)
    for k in range(n_iter):
        margins = s * (Z @ gam)
        obj = _hinge_objective(margins, w, gam, lam_j)
        if obj < best_obj:
            best_obj, best_gam = obj, gam.copy()
        trace[k] = best_obj
        active = margins < 1.0
        g = -(ws[active] @ Z[active]) / n
        eta = step0 / np.sqrt(k + 1.0)
        gam = (gam - eta * g) / (1.0 + 2.0 * eta * lam_j)
    obj = _hinge_objective(s * (Z @ gam), w, gam, lam_j)
    if obj < best_obj:
        best_obj, best_gam = obj, gam.copy()
    return _unstandardize(best_gam, mean, scale, icol), best_obj * wbar, trace * wbar


def _owl_from_arrays(features: StateFeatures, states, actions, Y, pi, lam, n_iter, step0) -> LinearDecisionFn:
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    if np.any((actions != 0) & (actions != 1)):
        raise SchemaError("outcome-weighted learning needs two arms coded 0/1")
    Y = np.asarray(Y, dtype=float)
    shift = 0.0
    if Y.size and Y.min() < 0:
        shift = float(-Y.min() + OWL_SHIFT_EPS)
        Y = Y + shift
    Phi = features(states)
    icol = 0 if features.intercept else None
    coef, obj, trace = _owl_solve(Phi, 2.0 * actions - 1.0, Y / pi, lam, icol, n_iter, step0)
    meta = {"outcome_shift": shift, "objective": float(obj), "lambda": float(lam), "n_fit": int(Y.shape[0])}
    return LinearDecisionFn(features, coef, meta, trace)


def owl_fit(data: Dataset, lam: float, features: StateFeatures | None = None, n_iter: int = 10_000,
            step0: float = 1.0) -> LinearDecisionFn:
    """Single-stage OWL: minimize ``P_N[(Y/pi) hinge(A f(H))] + lam ||beta||^2``.

    Arms 0/1 are coded -1/+1; the intercept (first feature when
    ``features.intercept``) is unpenalized. Negative outcomes are shifted by
    ``-min(Y) + 1e-6``; the shift is stored in ``meta['outcome_shift']``.
    """
    if data.require_fixed() != 1:
        raise SchemaError("owl_fit needs single-stage data; use bowl_fit or sowl_fit")
    if data.schema.arms_at(0) != 2:
        raise SchemaError("outcome-weighted learning needs exactly two arms")
    st = data.stage(0)
    features = features or StateFeatures(data.schema.dim_at(0))
    Y = data.complete_rewards()[:, 0]
    return _owl_from_arrays(features, st.states, st.actions, Y, st.behavior_prob, lam, n_iter, step0)


def _per_stage(value, T: int, name: str) -> list:
    if isinstance(value, (list, tuple)):
        if len(value) != T:
            raise SchemaError(f"{name}: need {T} entries, got {len(value)}")
        return list(value)
    return [value] * T


def bowl_fit(data: Dataset, lams, features=None, n_iter: int = 10_000, step0: float = 1.0) -> list[LinearDecisionFn]:
    """Backward OWL.

    Stage ``t`` is fitted on trajectories that followed the already fitted
    rules at every later stage, with outcome ``sum_{tau >= t} Y_{tau+1}``
    weighted by ``prod_{tau >= t} 1/pi_tau``. ``meta['n_fit']`` records the
    retained count per stage.
    """
    T = data.require_fixed()
    if any(data.schema.arms_at(t) != 2 for t in range(T)):
        raise SchemaError("outcome-weighted learning needs exactly two arms per stage")
    lams = _per_stage(lams, T, "lams")
    feats = [f or StateFeatures(data.schema.dim_at(t)) for t, f in enumerate(_per_stage(features, T, "features"))]
    R = returns_to_go(data.complete_rewards(), 1.0)
    keep = np.ones(data.n, dtype=bool)
    pi_prod = np.ones(data.n)
    fns: list = [None] * T
    retained: dict[int, int] = {}
    for t in range(T - 1, -1, -1):
        st = data.stage(t)
        pi_prod = pi_prod * st.behavior_prob
        retained[t] = int(keep.sum())
        if retained[t] == 0:
            raise SampleDepletionError(f"no trajectory follows the fitted rules after stage {t}", retained)
        fns[t] = _owl_from_arrays(feats[t], st.states[keep], st.actions[keep], R[keep, t], pi_prod[keep],
                                  lams[t], n_iter, step0)
        keep = keep & (fns[t].arms(st.states) == st.actions)
    return fns


def sowl_surrogate(x1, x2):
    """Concave surrogate of the product of indicators: ``min(x1-1, x2-1, 0) + 1``."""
    return np.minimum(np.minimum(np.asarray(x1, dtype=float) - 1.0, np.asarray(x2, dtype=float) - 1.0), 0.0) + 1.0


def sowl_fit(data: Dataset, lam: float, features=None, n_restarts: int = 10, n_iter: int = 2000,
             step0: float = 1.0, seed: int = 0) -> tuple[LinearDecisionFn, LinearDecisionFn]:
    """Simultaneous two-stage OWL.

    Maximizes ``P_N[Y psi(A_0 f_0, A_1 f_1) / (pi_0 pi_1)] - lam (||f_0||^2 + ||f_1||^2)``
    by projected proximal supergradient ascent. Restart 0 starts at zero, the
    others at seeded standard normal draws; the best objective wins.

    Outcomes are used as given. Unlike the hinge loss, the surrogate is not
    invariant to shifting ``Y``: a large common baseline makes ``f = 0`` the
    maximizer. With negative outcomes the objective is no longer concave,
    hence the restarts.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    if data.require_fixed() != 2:
        raise SchemaError("sowl_fit needs two-stage data")
    if any(data.schema.arms_at(t) != 2 for t in range(2)):
        raise SchemaError("outcome-weighted learning needs exactly two arms per stage")
    feats = [f or StateFeatures(data.schema.dim_at(t)) for t, f in enumerate(_per_stage(features, 2, "features"))]
    st = [data.stage(0), data.stage(1)]
    Y = data.complete_rewards().sum(axis=1)
    W = Y / (st[0].behavior_prob * st[1].behavior_prob)
    wbar = float(np.mean(np.abs(W)))
    meta = {"lambda": float(lam), "n_fit": int(data.n)}
    if wbar == 0.0:
        return tuple(LinearDecisionFn(f, np.zeros(f.dim), dict(meta, objective=0.0)) for f in feats)
    W = W / wbar
    n = data.n
    Zs, means, scales, lam_js, signs, icols = [], [], [], [], [], []
    for t in range(2):
        Phi = feats[t](st[t].states)
        icol = 0 if feats[t].intercept else None
        pen = np.ones(Phi.shape[1], dtype=bool)
        if icol is not None:
            pen[icol] = False
        Z, m, sc = _standardize(Phi, pen, icol is not None)
        Zs.append(Z), means.append(m), scales.append(sc), icols.append(icol)
        lam_js.append(np.where(pen, (lam / wbar) / sc ** 2, 0.0))
        signs.append(2.0 * st[t].actions - 1.0)
    ws = [W * signs[0], W * signs[1]]

    def objective(g0, g1, u, v):
        return float(np.mean(W * sowl_surrogate(u, v)) - np.sum(lam_js[0] * g0 * g0) - np.sum(lam_js[1] * g1 * g1))

    root = RngStream(seed)
    best = (-np.inf, None, None)
    for r in range(n_restarts):
        if r == 0:
            g0, g1 = np.zeros(Zs[0].shape[1]), np.zeros(Zs[1].shape[1])
        else:
            rs = root.child(f"restart{r}")
            g0, g1 = rs.standard_normal(Zs[0].shape[1]), rs.standard_normal(Zs[1].shape[1])
        for k in range(n_iter + 1):
            u = signs[0] * (Zs[0] @ g0)
            v = signs[1] * (Zs[1] @ g1)
            obj = objective(g0, g1, u, v)
            if obj > best[0]:
                best = (obj, g0.copy(), g1.copy())
            if k == n_iter:
                break
            # supergradient: the active piece of the min (lowest index on ties)
            c0 = (u <= v) & (u < 1.0)
            c1 = (v < u) & (v < 1.0)
            d0 = (ws[0][c0] @ Zs[0][c0]) / n
            d1 = (ws[1][c1] @ Zs[1][c1]) / n
            eta = step0 / np.sqrt(k + 1.0)
            g0 = np.clip((g0 + eta * d0) / (1.0 + 2.0 * eta * lam_js[0]), -SOWL_BOX, SOWL_BOX)
            g1 = np.clip((g1 + eta * d1) / (1.0 + 2.0 * eta * lam_js[1]), -SOWL_BOX, SOWL_BOX)
    obj, g0, g1 = best
    out = []
    for t, g in enumerate((g0, g1)):
        coef = _unstandardize(g, means[t], scales[t], icols[t])
        out.append(LinearDecisionFn(feats[t], coef, dict(meta, objective=obj * wbar)))
    return tuple(out)


def regime_from_decision_fns(fns: Sequence[LinearDecisionFn]) -> SignRulePolicy:
    return SignRulePolicy(list(fns))


# --------------------------------------------------------------------------
# V-learning


@dataclass
class VLearnModel:
    """Linear value model ``V(x; theta) = psi(x)' theta`` fitted by V-learning.

    ``A`` and ``b`` define the estimating function ``Lambda(theta) = b - A theta``.
    """

    theta: np.ndarray
    gamma: float
    lam: float
    features: StateFeatures
    W: np.ndarray
    A: np.ndarray
    b: np.ndarray
    n_transitions: int

    def value(self, states) -> np.ndarray:
        return self.features(states) @ self.theta

    def estimating_function(self, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        return self.b - self.A @ theta

    def objective(self, theta=None) -> float:
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        r = self.estimating_function(theta)
        return float(r @ solve_spd(self.W, r) + self.lam * theta @ theta)


def _transitions(data: Dataset):
    """Stack consecutive-record transitions ``(t, X_t, A_t, Y_{t+1}, X_{t+1}, pi_t)``."""
    cols: dict[str, list] = {k: [] for k in ("t", "x", "a", "y", "x1", "pi")}
    for tr in data.trajectories:
        recs = tr.records
        for t in range(len(recs) - 1):
            r = recs[t]
            if r.reward is MISSING:
                raise MissingRewardError("MISSING reward in a transition; impute before V-learning")
            cols["t"].append(t)
            cols["x"].append(r.state)
            cols["a"].append(r.action)
            cols["y"].append(r.reward)
            cols["x1"].append(recs[t + 1].state)
            cols["pi"].append(r.behavior_prob)
    if not cols["t"]:
        raise SchemaError("V-learning needs trajectories with at least two records")
    return (np.array(cols["t"]), np.array(cols["x"], dtype=float), np.array(cols["a"], dtype=int),
            np.array(cols["y"], dtype=float), np.array(cols["x1"], dtype=float), np.array(cols["pi"], dtype=float))


def vlearn_fit(data: Dataset, policy: PolicySpec, gamma: float, lam: float = 0.0,
               features: StateFeatures | None = None, W=None) -> VLearnModel:
    """Fit ``theta`` minimizing ``Lambda' W^-1 Lambda + lam ||theta||^2`` where

    ``Lambda(theta) = P_N[sum_t (d/pi)(Y_{t+1} + gamma V(X_{t+1}) - V(X_t)) psi(X_t)]``.

    Each consecutive pair of records is one transition; the final record of a
    trajectory has no observed successor and is not used.
    """
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    features = features or StateFeatures(data.schema.dim_at(0))
    ts, X, A, Y, X1, pi = _transitions(data)
    if np.any(pi <= 0):
        raise PositivityError("behavior_prob must be > 0")
    d = np.empty(ts.shape[0])
    for t in np.unique(ts):
        m = ts == t
        d[m] = target_probs_of_actions(policy, int(t), X[m], A[m])
    w = d / pi
    Psi, Psi1 = features(X), features(X1)
    N = data.n
    A_mat = (Psi * w[:, None]).T @ (Psi - gamma * Psi1) / N
    b = (Psi * w[:, None]).T @ Y / N
    k = Psi.shape[1]
    W = np.eye(k) if W is None else np.asarray(W, dtype=float)
    cholesky(W)  # must be positive definite
    WinvA = solve_spd(W, A_mat)
    M = A_mat.T @ WinvA
    M = 0.5 * (M + M.T) + lam * np.eye(k)
    theta = solve_spd(M, WinvA.T @ b)
    return VLearnModel(theta, gamma, lam, features, W, A_mat, b, int(ts.shape[0]))


@dataclass
class VSearchResult:
    best_index: int
    best_policy: PolicySpec
    values: list
    models: list


def initial_states(data: Dataset) -> np.ndarray:
    return np.array([tr.records[0].state for tr in data.trajectories], dtype=float)


def vlearn_policy_search(data: Dataset, candidates: Sequence[PolicySpec], gamma: float, lam: float = 0.0,
                         features: StateFeatures | None = None, init_states=None,
                         tie_tol: float = 1e-10) -> VSearchResult:
    """Score each candidate by its fitted value averaged over initial states
    (the empirical first states by default) and return the best.

    Candidates within ``tie_tol`` (relative) of the best value count as tied;
    the first in enumeration order wins.
    """
    if not candidates:
        raise ValueError("need at least one candidate policy")
    X0 = initial_states(data) if init_states is None else np.atleast_2d(np.asarray(init_states, dtype=float))
    models, values = [], []
    for pol in candidates:
        m = vlearn_fit(data, pol, gamma, lam, features)
        models.append(m)
        values.append(float(np.mean(m.value(X0))))
    top = max(values)
    best = next(i for i, v in enumerate(values) if v >= top - tie_tol * max(1.0, abs(top)))
    return VSearchResult(best, candidates[best], values, models)


def softmax_candidates(psis: Sequence, intercept: bool = False) -> list[SoftmaxPolicy]:
    return [SoftmaxPolicy(np.asarray(p, dtype=float), intercept=intercept) for p in psis]
