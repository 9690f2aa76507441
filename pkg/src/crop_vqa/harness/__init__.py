"""Experiment harness: run configs, the runner, timing, and report emission."""

from .config import (
    BackendsConfig,
    ConfigError,
    DatasetConfig,
    RunConfig,
    parse_dataset_arg,
)
from .fixtures import make_synthetic_dataset
from .reporting import (
    QuestionResult,
    RunReport,
    TimingRecord,
    aggregate_run,
    combine_method_runs,
    load_run_dir,
    reaggregate,
    write_run_outputs,
)
from .runner import load_dataset, run_experiment
from .timing import measure_timing

__all__ = [
    "BackendsConfig",
    "ConfigError",
    "DatasetConfig",
    "QuestionResult",
    "RunConfig",
    "RunReport",
    "TimingRecord",
    "aggregate_run",
    "combine_method_runs",
    "load_dataset",
    "load_run_dir",
    "make_synthetic_dataset",
    "measure_timing",
    "parse_dataset_arg",
    "reaggregate",
    "run_experiment",
    "write_run_outputs",
]
