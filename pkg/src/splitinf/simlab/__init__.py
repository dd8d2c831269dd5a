"""Simulation harness comparing data splitting with additive randomisation."""

from .config import ExperimentConfig, default_config, load_config
from .experiments import (gen_beta, run_coverage_coef, run_coverage_projection, run_experiment,
                          run_power, run_prop1, run_stability, run_theorem1)
from .runner import RunResult, run_replications
from .tables import ResultTable

__all__ = [
    "ExperimentConfig",
    "default_config",
    "load_config",
    "gen_beta",
    "run_power",
    "run_stability",
    "run_coverage_coef",
    "run_coverage_projection",
    "run_theorem1",
    "run_prop1",
    "run_experiment",
    "RunResult",
    "run_replications",
    "ResultTable",
]
