"""Command-line entry point: ``seqpolicy VERB --config PATH [--seed N] [--out DIR] [--quiet]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from ..core import read_dataset_csv, write_dataset_csv
from ..dtr_direct import estimate_value_iptw, estimate_value_mc
from ..errors import ConfigError, ConfigParseError
from ..numerics import RngStream
from ..simulators import simulate_mrt, simulate_smart, write_regret_trace
from .config import ExperimentConfig, load_config
from .runner import agent_factory, run_experiment, smart_regime

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def _log(args):
    return (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))


def _data(cfg: ExperimentConfig, args):
    if getattr(args, "data", None):
        return read_dataset_csv(args.data), None
    return simulate_smart(cfg.env_config(), cfg.n, RngStream.for_task(cfg.master_seed, 0, "smart/train"))


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = cfg.env_config()
    if cfg.scenario == "smart":
        data, truth = simulate_smart(env, cfg.n, RngStream.for_task(cfg.master_seed, 0, "smart/train"))
        write_dataset_csv(data, out / "dataset.csv")
        (out / "truth.yaml").write_text(yaml.safe_dump({
            "q_coefficients": [c.tolist() for c in truth.q_coefs],
            "feature_maps": [fm.to_dict() for fm in truth.feature_maps],
            "responder_prob": truth.responder_prob}, sort_keys=True))
    else:
        m = cfg.methods[0]
        res = simulate_mrt(env, agent_factory(m.kind, m.params, env), cfg.n_users,
                           RngStream.for_task(cfg.master_seed, 0, "mrt"))
        write_dataset_csv(res.dataset, out / "dataset.csv")
        write_regret_trace(res.trace, out / "regret_trace.csv")
    _log(args)(f"wrote simulated data to {out}")
    return EXIT_OK


def _offline_only(cfg: ExperimentConfig, verb: str) -> None:
    if cfg.scenario != "smart":
        raise ConfigError([f"'{verb}' needs scenario 'smart'"])


def cmd_fit(cfg: ExperimentConfig, args) -> int:
    _offline_only(cfg, "fit")
    data, _ = _data(cfg, args)
    env = cfg.env_config()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = {}
    for m in cfg.methods:
        policy, extra = smart_regime(m.kind, m.params, data, env)
        if "model" in extra:
            models[m.id] = extra["model"].to_dict()
        elif policy is not None:
            models[m.id] = {"stages": [fn.to_dict() for fn in policy.decision_fns]}
    (out / "models.yaml").write_text(yaml.safe_dump(models, sort_keys=True))
    _log(args)(f"wrote {len(models)} fitted models to {out / 'models.yaml'}")
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    _offline_only(cfg, "evaluate")
    data, _ = _data(cfg, args)
    env = cfg.env_config()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for m in cfg.methods:
        policy, _ = smart_regime(m.kind, m.params, data, env)
        if policy is None:
            continue
        for est in (estimate_value_iptw, estimate_value_mc):
            records.append({"method_id": m.id, **est(data, policy).to_dict(),
                            "config_hash": cfg.hash(), "seed": cfg.master_seed})
    (out / "estimates.yaml").write_text(yaml.safe_dump(records, sort_keys=True))
    _log(args)(f"wrote {len(records)} estimates to {out / 'estimates.yaml'}")
    return EXIT_OK


def cmd_experiment(cfg: ExperimentConfig, args) -> int:
    log = _log(args)
    res = run_experiment(cfg, log=log)
    log(f"wrote {res.out_dir / 'metrics.csv'} ({len(res.results)} tasks, {len(res.failures)} failed)")
    return res.exit_code


def cmd_bandit_run(cfg: ExperimentConfig, args) -> int:
    if cfg.scenario != "mrt":
        raise ConfigError(["'bandit-run' needs scenario 'mrt'"])
    return cmd_experiment(cfg, args)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate,
            "bandit-run": cmd_bandit_run, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqpolicy", description="Sequential policy learning experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument("--quiet", action="store_true")
        if verb in ("fit", "evaluate"):
            p.add_argument("--data", default=None, help="dataset CSV (default: simulate from the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.verb](cfg, args)
    except (ConfigError, ConfigParseError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
