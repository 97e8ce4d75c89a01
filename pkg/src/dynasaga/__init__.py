"""SAGA with dynamically growing sample sizes (dynaSAGA), baselines and bound analysis."""

from dynasaga.harness import ExperimentConfig, emit_csv, read_csv, run_experiment
from dynasaga.model import Dataset, LossModel, ProblemConstants, Sample, constants
from dynasaga.optim import EtaRule, RunConfig, dynasaga_run, saga_run
from dynasaga.schedules import Schedule

__all__ = [
    "Dataset",
    "EtaRule",
    "ExperimentConfig",
    "LossModel",
    "ProblemConstants",
    "RunConfig",
    "Sample",
    "Schedule",
    "constants",
    "dynasaga_run",
    "emit_csv",
    "read_csv",
    "run_experiment",
    "saga_run",
]
