"""Experiment orchestration: configs, named experiments, reports, CLI."""

from .config import (
    EXPERIMENT_KINDS,
    PROFILES,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .experiments import (
    EXPERIMENTS,
    direction_field,
    load_checkpoint,
    rough_initial_field,
    run_cont_dependence,
    run_control_decay,
    run_exp_moment,
    run_experiment,
    run_inequalities,
    run_irreducibility,
    run_moment_growth,
    save_checkpoint,
)
from .report import ExperimentReport, Verdict, build_stamp, emit_report
from .cli import main

__all__ = [
    "EXPERIMENT_KINDS",
    "EXPERIMENTS",
    "PROFILES",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "Verdict",
    "build_stamp",
    "direction_field",
    "emit_report",
    "load_checkpoint",
    "load_config",
    "main",
    "rough_initial_field",
    "save_checkpoint",
    "run_cont_dependence",
    "run_control_decay",
    "run_exp_moment",
    "run_experiment",
    "run_inequalities",
    "run_irreducibility",
    "run_moment_growth",
]
