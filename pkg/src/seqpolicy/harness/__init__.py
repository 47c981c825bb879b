"""Configuration, replicated experiments and the command-line interface."""

from .config import ExperimentConfig, MethodConfig, dump_config, load_config, parse_config
from .runner import ExperimentResult, run_experiment

__all__ = ["ExperimentConfig", "MethodConfig", "ExperimentResult", "dump_config", "load_config",
           "parse_config", "run_experiment"]
