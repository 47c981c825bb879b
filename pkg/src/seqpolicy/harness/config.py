"""Experiment configuration: YAML in, validated dataclass out.

Canonical form (``dump_config``) is YAML with sorted keys and every default
filled in, so ``load -> dump -> load`` is the identity.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..errors import ConfigError, ConfigParseError
from ..simulators import MrtConfig, SmartConfig

SCENARIOS = ("smart", "mrt")

# kind -> {param: (default, check, description)}
_pos = (lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0, "> 0")
_nonneg = (lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0, ">= 0")
_unit = (lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and 0 <= v <= 1, "in [0, 1]")
_count = (lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0, "an integer >= 0")
_poscount = (lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 1, "an integer >= 1")
_half = (lambda v: isinstance(v, (int, float)) and 0 < v < 0.5, "in (0, 0.5)")
_open = (lambda v: isinstance(v, (int, float)) and 0 < v < 1, "in (0, 1)")
_bool = (lambda v: isinstance(v, bool), "a boolean")
_missing = (lambda v: v in ("skip", "locf"), "'skip' or 'locf'")

_ONLINE_COMMON = {"burn_in": (0, *_count), "missing": ("skip", *_missing)}
METHOD_PARAMS: dict[str, dict[str, dict[str, tuple]]] = {
    "mrt": {
        "uniform": dict(_ONLINE_COMMON),
        "static": {**_ONLINE_COMMON, "arm": (0, *_count)},
        "linucb": {**_ONLINE_COMMON, "alpha": (1.0, *_nonneg), "lambda_ridge": (1.0, *_pos)},
        "lints": {**_ONLINE_COMMON, "nu": (1.0, *_nonneg), "lambda_ridge": (1.0, *_pos),
                  "n_prob_draws": (100, *_count)},
        "nig_ts": {**_ONLINE_COMMON, "prior_scale": (1.0, *_pos), "a0": (1.0, *_pos), "b0": (1.0, *_pos),
                   "greedy": (False, *_bool), "n_prob_draws": (100, *_count)},
        "actor_critic": {**_ONLINE_COMMON, "pi_min": (0.1, *_half), "alpha_cc": (0.1, *_open),
                         "lagrange": (0.1, *_nonneg), "lambda_ridge": (1.0, *_pos),
                         "refit_every": (100, *_poscount)},
    },
    "smart": {
        "behavior": {"gamma": (1.0, *_unit)},
        "q_learning": {"gamma": (1.0, *_unit), "ridge_lambda": (1e-6, *_nonneg)},
        "bowl": {"lam": (0.01, *_pos), "n_iter": (10_000, *_poscount)},
        "sowl": {"lam": (0.01, *_pos), "n_iter": (2000, *_poscount), "n_restarts": (10, *_poscount)},
    },
}

_TOP_DEFAULTS = {"replications": 1, "master_seed": 0, "output_dir": "out", "n": 1000, "n_test": 10_000,
                 "n_users": 1, "write_trace": True}


@dataclass(frozen=True)
class MethodConfig:
    id: str
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    env: dict
    methods: tuple
    replications: int = 1
    master_seed: int = 0
    output_dir: str = "out"
    n: int = 1000
    n_test: int = 10_000
    n_users: int = 1
    write_trace: bool = True

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "env": _plain(self.env), "methods": [m.to_dict() for m in self.methods],
                "replications": self.replications, "master_seed": self.master_seed, "output_dir": self.output_dir,
                "n": self.n, "n_test": self.n_test, "n_users": self.n_users, "write_trace": self.write_trace}

    def env_config(self):
        cls = SmartConfig if self.scenario == "smart" else MrtConfig
        return cls(**_tupled(self.env))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, master_seed=int(seed))

    def with_output(self, out: str) -> "ExperimentConfig":
        return dataclasses.replace(self, output_dir=str(out))

    def hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _tupled(v):
    if isinstance(v, dict):
        return {k: _tupled(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return tuple(_tupled(x) for x in v)
    return v


def _env_defaults(scenario: str) -> dict:
    cls = SmartConfig if scenario == "smart" else MrtConfig
    return {f.name: _plain(f.default) for f in dataclasses.fields(cls)}


def _validate(raw: dict) -> tuple[ExperimentConfig | None, list[str]]:
    v: list[str] = []
    if not isinstance(raw, dict):
        return None, ["top level must be a mapping"]
    known = {"scenario", "env", "methods", *_TOP_DEFAULTS}
    for k in raw:
        if k not in known:
            v.append(f"unknown top-level field '{k}'")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        v.append(f"scenario: must be one of {list(SCENARIOS)}, got {scenario!r}")
    top = {k: raw.get(k, d) for k, d in _TOP_DEFAULTS.items()}
    if not (_poscount[0](top["replications"])):
        v.append(f"replications: must be an integer >= 1, got {top['replications']!r}")
    seed = top["master_seed"]
    if not (isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64):
        v.append(f"master_seed: must be an integer in [0, 2^64), got {seed!r}")
    for k in ("n", "n_test", "n_users"):
        if not _poscount[0](top[k]):
            v.append(f"{k}: must be an integer >= 1, got {top[k]!r}")
    if not isinstance(top["output_dir"], str):
        v.append("output_dir: must be a string")
    if not isinstance(top["write_trace"], bool):
        v.append("write_trace: must be a boolean")

    env: dict = {}
    raw_env = raw.get("env", {})
    if raw_env is None:
        raw_env = {}
    if not isinstance(raw_env, dict):
        v.append("env: must be a mapping")
    elif scenario in SCENARIOS:
        defaults = _env_defaults(scenario)
        for k in raw_env:
            if k not in defaults:
                v.append(f"env.{k}: unknown field for scenario '{scenario}'")
        env = {k: _plain(raw_env.get(k, d)) for k, d in defaults.items()}
        try:
            cls = SmartConfig if scenario == "smart" else MrtConfig
            v.extend(f"env: {msg}" for msg in cls(**_tupled(env)).violations())
        except (TypeError, ValueError) as exc:
            v.append(f"env: {exc}")

    methods = []
    raw_methods = raw.get("methods")
    if not isinstance(raw_methods, list) or not raw_methods:
        v.append("methods: at least one method block is required")
        raw_methods = []
    seen = set()
    for i, m in enumerate(raw_methods):
        where = f"methods[{i}]"
        if not isinstance(m, dict):
            v.append(f"{where}: must be a mapping")
            continue
        for k in m:
            if k not in ("id", "kind", "params"):
                v.append(f"{where}.{k}: unknown field")
        kind = m.get("kind")
        mid = m.get("id", kind)
        if not isinstance(mid, str) or not mid:
            v.append(f"{where}.id: must be a non-empty string")
        elif mid in seen:
            v.append(f"{where}.id: duplicate id '{mid}'")
        seen.add(mid)
        table = METHOD_PARAMS.get(scenario, {}) if scenario in SCENARIOS else {}
        if kind not in table:
            if scenario in SCENARIOS:
                v.append(f"{where}.kind: '{kind}' is not available for scenario '{scenario}' "
                         f"(choose from {sorted(table)})")
            continue
        params = m.get("params") or {}
        if not isinstance(params, dict):
            v.append(f"{where}.params: must be a mapping")
            continue
        spec = table[kind]
        filled = {}
        for k, val in params.items():
            if k not in spec:
                v.append(f"{where}.params.{k}: unknown parameter for '{kind}'")
        for k, (default, check, desc) in spec.items():
            val = params.get(k, default)
            if not check(val):
                v.append(f"{where}.params.{k}: must be {desc}, got {val!r}")
            filled[k] = val
        if kind == "static" and scenario == "mrt" and isinstance(env.get("n_arms"), int):
            if isinstance(filled["arm"], int) and filled["arm"] >= env["n_arms"]:
                v.append(f"{where}.params.arm: must be < n_arms={env['n_arms']}")
        if kind == "actor_critic" and env.get("n_arms") != 2:
            v.append(f"{where}.kind: actor_critic needs env.n_arms = 2")
        methods.append(MethodConfig(str(mid), kind, filled))
    if v:
        return None, v
    return ExperimentConfig(scenario, env, tuple(methods), **top), []


def config_from_dict(raw: Any) -> ExperimentConfig:
    cfg, violations = _validate(raw)
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigParseError(exc.problem or str(exc), line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(str(exc)) from None
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    """Read, parse and validate; every violation is reported at once."""
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)
