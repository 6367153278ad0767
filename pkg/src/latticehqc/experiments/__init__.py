"""Experiment harness: configuration, drivers, slope fits and tables."""

from .analysis import SlopeFit, av, fit_slope, plateau_start
from .config import EXPERIMENTS, ExperimentConfig, apply_overrides, default_config, load_config
from .io import read_csv, write_csv, write_text
from .runners import (ErrorReport, build_model_1d, c8_spread, draw_values, run_2d, run_experiment,
                      run_linear_1d, run_nonlinear_1d, run_p_study, sin_force, sweep_1d)

__all__ = [
    "SlopeFit", "av", "fit_slope", "plateau_start",
    "EXPERIMENTS", "ExperimentConfig", "apply_overrides", "default_config", "load_config",
    "read_csv", "write_csv", "write_text",
    "ErrorReport", "build_model_1d", "c8_spread", "draw_values", "run_2d", "run_experiment",
    "run_linear_1d", "run_nonlinear_1d", "run_p_study", "sin_force", "sweep_1d",
]
