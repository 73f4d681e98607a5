"""Scenarios, the end-to-end runner, evaluation metrics, plotting and the CLI."""

from msslam.bench.metrics import PRF, ate_rmse, compute_metrics, object_prf, prf_from_counts, transform_error
from msslam.bench.plot import emit_plot
from msslam.bench.runner import RunResult, run_scenario
from msslam.bench.scenario import BUNDLED, Scenario, load_scenario, scenario_from_dict, validate

__all__ = [
    "PRF", "ate_rmse", "compute_metrics", "object_prf", "prf_from_counts", "transform_error", "emit_plot",
    "RunResult", "run_scenario", "BUNDLED", "Scenario", "load_scenario", "scenario_from_dict", "validate",
]
