"""Evaluation metrics: the per-time residual ratio ("true cost") and relative density errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functional import Forcing, Objective, State
from .grid import Grid
from .params import MfgParams

ERROR_FLOOR = 1e-3
ERROR_THRESHOLD = 0.25
FORECAST_START = 3  # weeks 1-3 are pinned; weeks 4-11 are the forecast


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    true_cost: np.ndarray
    error_matrix: np.ndarray
    summary: dict

    def to_json(self) -> dict:
        return {
            "true_cost": self.true_cost.tolist(),
            "error_matrix": self.error_matrix.tolist(),
            "summary": self.summary,
        }


def true_cost(s: State, p: MfgParams, g: Grid, forcing: Forcing | None = None) -> np.ndarray:
    """``sqrt(int (L1^2 + L2^2) dx / int (u(x,0)^2 + m(x,0)^2) dx)`` for every time node.

    Unweighted and unregularized; ``forcing`` defaults to zero.
    """
    u, m = g.check_field(s.u, "u"), g.check_field(s.m, "m")
    denom = float(g.wx @ (u[:, 0] ** 2 + m[:, 0] ** 2))
    if denom == 0.0:
        raise MetricsError("true cost undefined: u(., 0) and m(., 0) are both identically zero")
    L1, L2, _ = Objective(p, g, forcing).residuals(u, m)
    return np.sqrt((g.wx @ (L1**2 + L2**2)) / denom)


def error_metric(m_sol: np.ndarray, m_data: np.ndarray, floor: float = ERROR_FLOOR) -> np.ndarray:
    """Elementwise ``|m_sol - m_data| / max(|m_data|, floor)``."""
    m_sol = np.asarray(m_sol, dtype=float)
    m_data = np.asarray(m_data, dtype=float)
    if m_sol.shape != m_data.shape:
        raise MetricsError(f"shape mismatch: {m_sol.shape} vs {m_data.shape}")
    return np.abs(m_sol - m_data) / np.maximum(np.abs(m_data), floor)


def summarize(err: np.ndarray, start: int = FORECAST_START, threshold: float = ERROR_THRESHOLD) -> dict:
    window = err[:, start:]
    return {
        "mean_relative_error": float(window.mean()),
        "max_relative_error": float(window.max()),
        "fraction_below_threshold": float(np.mean(window < threshold)),
        "threshold": threshold,
        "forecast_weeks": [start + 1, err.shape[1]],
    }


def metrics_report(
    s: State, m_data: np.ndarray, p: MfgParams, g: Grid, floor: float = ERROR_FLOOR
) -> MetricsReport:
    err = error_metric(s.m, m_data, floor)
    tc = true_cost(s, p, g)
    summary = summarize(err)
    summary["true_cost_max_after_week2"] = float(tc[2:].max()) if g.nt > 2 else float(tc.max())
    return MetricsReport(true_cost=tc, error_matrix=err, summary=summary)
