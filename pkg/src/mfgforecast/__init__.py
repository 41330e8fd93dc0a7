"""Density forecasting with a Carleman-weighted convexification of a 1D mean-field-game system."""

from .calibrate import CalibrationReport, CalibrationSpec, sweep
from .carleman import CarlemanParams, balance_scale, cwf, q_factor, validate_c
from .functional import Forcing, State, eval_J, grad_J, op_L1, op_L2
from .grid import Grid, make_grid
from .ingest import kde_density, load_scores, period_densities, preprocess
from .init_estimate import estimate_initial_value
from .metrics import MetricsReport, error_metric, true_cost
from .params import PERIOD_PRESETS, MfgParams
from .solver import ConstraintSet, SolveResult, SolverOptions, forecast, minimize

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport", "CalibrationSpec", "CarlemanParams", "ConstraintSet", "Forcing", "Grid",
    "MetricsReport", "MfgParams", "PERIOD_PRESETS", "SolveResult", "SolverOptions", "State",
    "balance_scale", "cwf", "error_metric", "estimate_initial_value", "eval_J", "forecast",
    "grad_J", "kde_density", "load_scores", "make_grid", "minimize", "op_L1", "op_L2",
    "period_densities", "preprocess", "q_factor", "sweep", "true_cost", "validate_c",
]
