"""Multi-indication synthesis simulation engine."""

from ._core import (
    ConfigError,
    DesignTargets,
    Error,
    NotEstimable,
    __version__,
    aggregate,
    calibrate,
    estimand,
    lachin_foulkes_n,
    lhr_os,
    model_ids,
    run,
    run_unit,
    scenario_grid,
    select_scenarios,
    simulate_dataset,
)

__all__ = [
    "ConfigError",
    "DesignTargets",
    "Error",
    "NotEstimable",
    "__version__",
    "aggregate",
    "calibrate",
    "estimand",
    "lachin_foulkes_n",
    "lhr_os",
    "model_ids",
    "run",
    "run_unit",
    "scenario_grid",
    "select_scenarios",
    "simulate_dataset",
]
