"""Grid-sweep calibration of (beta, r, u(-1, 0)) against a period of weekly densities.

Each candidate triple gets a full forecast; candidates are ranked by a scalar
score computed from the forecast-window relative errors.  Scores are rounded to
``SCORE_DIGITS`` significant digits before ranking so that candidates whose
forecasts differ only by floating-point noise tie, and ties fall back to the
lexicographic order of ``(beta, r, u_left)``.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .carleman import CarlemanParams
from .grid import Grid
from .metrics import MetricsReport, error_metric, true_cost  # noqa: F401  (re-exported)
from .params import PERIOD_PRESETS, MfgParams, ParamError
from .solver import Forecast, SolverError, SolverOptions, forecast

log = logging.getLogger(__name__)

SCORE_DIGITS = 9
SCORING_RULES = ("mean_error", "fraction_below")


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationSpec:
    betas: list[float]
    rs: list[float]
    u_lefts: list[float]
    warm_start: bool = False
    scoring: str = "mean_error"

    def __post_init__(self):
        for name in ("betas", "rs", "u_lefts"):
            vals = [float(v) for v in getattr(self, name)]
            if not vals:
                raise CalibrationError(f"candidate list {name} is empty")
            if not all(np.isfinite(vals)):
                raise CalibrationError(f"candidate list {name} has non-finite values")
            setattr(self, name, vals)
        if any(b <= 0 for b in self.betas):
            raise CalibrationError("every candidate beta must be positive")
        if self.scoring not in SCORING_RULES:
            raise CalibrationError(f"unknown scoring rule {self.scoring!r}; expected one of {SCORING_RULES}")

    def triples(self) -> list[tuple[float, float, float]]:
        return list(itertools.product(self.betas, self.rs, self.u_lefts))

    @classmethod
    def around_preset(cls, period: int, rel_step: float = 0.2, **kw) -> "CalibrationSpec":
        """3x3x3 grid centred on a preset row, spaced by ``rel_step`` of each value."""
        if period not in PERIOD_PRESETS:
            raise ParamError(f"period preset must be 1..10, got {period}")
        row = PERIOD_PRESETS[period]
        spread = lambda v: [v * (1 - rel_step), v, v * (1 + rel_step)]  # noqa: E731
        return cls(spread(row["beta"]), spread(row["r"]), spread(row["u_left"]), **kw)


@dataclass
class CalibrationEntry:
    beta: float
    r: float
    u_left: float
    score: float | None
    metrics: MetricsReport | None = None
    iterations: int = 0
    converged: bool = False
    error: str | None = None
    result: Forecast | None = field(default=None, repr=False)

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.beta, self.r, self.u_left)

    def to_json(self, rank: int | None = None) -> dict:
        out = {
            "rank": rank,
            "beta": self.beta,
            "r": self.r,
            "u_left": self.u_left,
            "score": self.score,
            "iterations": self.iterations,
            "converged": self.converged,
            "error": self.error,
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics.to_json()
        return out


@dataclass
class CalibrationReport:
    entries: list[CalibrationEntry]
    scoring: str

    @property
    def best(self) -> CalibrationEntry:
        return self.entries[0]

    def to_json(self) -> dict:
        return {
            "scoring": self.scoring,
            "entries": [e.to_json(k + 1) for k, e in enumerate(self.entries)],
            "best": self.best.to_json(1),
        }


def score(report: MetricsReport, rule: str = "mean_error") -> float:
    """Lower is better under every rule."""
    if rule == "mean_error":
        return report.summary["mean_relative_error"]
    if rule == "fraction_below":
        return 1.0 - report.summary["fraction_below_threshold"]
    raise CalibrationError(f"unknown scoring rule {rule!r}")


def _quantize(v: float) -> float:
    return float(f"{v:.{SCORE_DIGITS}g}")


def rank_entries(entries: list[CalibrationEntry]) -> list[CalibrationEntry]:
    """Successful runs by (rounded score, beta, r, u_left); failures last, lexicographically."""
    ok = [e for e in entries if e.score is not None]
    bad = [e for e in entries if e.score is None]
    ok.sort(key=lambda e: (_quantize(e.score), e.beta, e.r, e.u_left))
    bad.sort(key=lambda e: e.triple)
    return ok + bad


def _run_one(args) -> CalibrationEntry:
    data, triple, base, g, opts, init, rule = args
    beta, r, u_left = triple
    try:
        p = base.with_(beta=beta, r=r, u_left=u_left)
        fc = forecast(data, p, g, opts, **init)
    except (SolverError, ValueError, FloatingPointError) as exc:
        log.warning("candidate beta=%g r=%g u_left=%g failed: %s", beta, r, u_left, exc)
        return CalibrationEntry(beta, r, u_left, None, error=str(exc))
    res = fc.result
    return CalibrationEntry(
        beta, r, u_left,
        score=score(fc.metrics, rule),
        metrics=fc.metrics,
        iterations=res.iterations,
        converged=res.converged,
        result=fc,
    )


def sweep(
    data,
    spec: CalibrationSpec,
    g: Grid,
    carleman: CarlemanParams | None = None,
    alpha: float = 1e-4,
    kernel=1.0,
    opts: SolverOptions | None = None,
    eps: float = 0.2,
    mode: str = "standard",
    formula: str = "standard",
    workers: int = 1,
    extra: list[tuple[float, float, float]] | None = None,
) -> CalibrationReport:
    """Forecast every candidate triple and rank the results.

    ``extra`` adds triples outside the product grid (used for warm starts).
    With ``workers > 1`` candidates run in separate processes; the ranking does
    not depend on completion order.
    """
    carleman = carleman or CarlemanParams(T=g.T)
    base = MfgParams(beta=spec.betas[0], r=spec.rs[0], kernel=kernel, carleman=carleman, alpha=alpha)
    triples = spec.triples()
    for t in extra or ():
        t = tuple(float(v) for v in t)
        if t not in triples:
            triples.append(t)
    init = dict(eps=eps, mode=mode, formula=formula)
    jobs = [(data, t, base, g, opts, init, spec.scoring) for t in triples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_one, jobs))
    else:
        entries = [_run_one(j) for j in jobs]
    if all(e.score is None for e in entries):
        detail = "; ".join(f"{e.triple}: {e.error}" for e in entries)
        raise CalibrationError(f"all {len(entries)} calibration runs failed: {detail}")
    return CalibrationReport(rank_entries(entries), spec.scoring)


def _recentre(values: list[float], centre: float) -> list[float]:
    """Move a candidate list so its middle entry lands on ``centre``.

    Ratios are kept when the list is single-signed around a nonzero middle
    (so positive betas stay positive); offsets are kept otherwise.
    """
    mid = sorted(values)[len(values) // 2]
    if mid != 0 and all(v * mid > 0 for v in values) and centre * mid > 0:
        out = [centre * (v / mid) for v in values]
    else:
        out = [centre + (v - mid) for v in values]
    return sorted(set(out))


def recentred(spec: CalibrationSpec, triple: tuple[float, float, float]) -> CalibrationSpec:
    beta, r, u_left = triple
    return CalibrationSpec(
        _recentre(spec.betas, beta), _recentre(spec.rs, r), _recentre(spec.u_lefts, u_left),
        warm_start=spec.warm_start, scoring=spec.scoring,
    )


def sweep_periods(periods, spec: CalibrationSpec, g: Grid, **kw) -> list[CalibrationReport]:
    """Calibrate consecutive periods.

    With ``spec.warm_start`` every period after the first searches the same
    grid shape re-centred on the previous period's best triple.
    """
    reports: list[CalibrationReport] = []
    for data in periods:
        current = recentred(spec, reports[-1].best.triple) if spec.warm_start and reports else spec
        reports.append(sweep(data, current, g, **kw))
    return reports
