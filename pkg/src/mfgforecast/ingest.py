"""Sentiment scores to weekly densities on the spatial grid.

Scores in [-1, 1] are read from a ``timestamp,score`` CSV, binned into
half-open weeks, turned into Gaussian KDE densities on the grid nodes and
smoothed so each slice is nonnegative, has unit trapezoid mass and satisfies
the discrete zero-Neumann condition at x = +-1.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import null_space
from scipy.optimize import nnls

from .grid import Grid, integrate_x, neumann_defect, neumann_inner

log = logging.getLogger(__name__)

MASS_TOL = 1e-8
NEUMANN_TOL = 1e-10


class IngestError(ValueError):
    pass


@dataclass
class SentimentSeries:
    times: list[datetime]
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class DensitySlice:
    values: np.ndarray
    week: int = 0


@dataclass
class WeeklyBins:
    start: datetime
    bins: list[list[float]]
    empty: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.bins)

    def sizes(self) -> list[int]:
        return [len(b) for b in self.bins]


def parse_timestamp(text: str) -> datetime:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def load_scores(path: str | Path) -> SentimentSeries:
    """Read a ``timestamp,score`` CSV with a header row."""
    path = Path(path)
    times: list[datetime] = []
    scores: list[float] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: no records")
        cols = [h.strip().lower() for h in header]
        if cols[:2] != ["timestamp", "score"]:
            raise IngestError(f"{path}: header must be 'timestamp,score', got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise IngestError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                t = parse_timestamp(row[0])
                s = float(row[1])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: malformed row {row!r} ({exc})") from None
            if not -1.0 <= s <= 1.0:
                raise IngestError(f"{path}:{lineno}: score {s} outside [-1, 1]")
            times.append(t)
            scores.append(s)
    if not times:
        raise IngestError(f"{path}: no records")
    order = sorted(range(len(times)), key=lambda k: times[k])
    return SentimentSeries([times[k] for k in order], np.asarray(scores)[order])


def weekly_bins(series: SentimentSeries, start: datetime, n_weeks: int) -> WeeklyBins:
    """Assign scores to weeks ``[start + 7k days, start + 7(k+1) days)``."""
    if n_weeks < 1:
        raise IngestError(f"n_weeks must be >= 1, got {n_weeks}")
    if start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    week = timedelta(days=7)
    bins: list[list[float]] = [[] for _ in range(n_weeks)]
    for t, s in zip(series.times, series.scores):
        k = (t - start) // week
        if 0 <= k < n_weeks:
            bins[k].append(float(s))
    empty = [k for k, b in enumerate(bins) if not b]
    for k in empty:
        log.warning("week %d (starting %s) has no scores", k, (start + k * week).date())
    return WeeklyBins(start, bins, empty)


def silverman_bandwidth(scores: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    sd = scores.std(ddof=1)
    q75, q25 = np.percentile(scores, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return 0.9 * spread * n ** (-0.2)


def kde_density(scores, g: Grid, bandwidth: float | str = "auto", week: int = 0) -> DensitySlice:
    """Gaussian KDE at the grid nodes, truncated to [-1, 1] and renormalized."""
    scores = np.asarray(scores, dtype=float)
    if scores.size < 2:
        raise IngestError(f"week {week}: KDE needs at least 2 scores, got {scores.size}")
    h = silverman_bandwidth(scores) if bandwidth == "auto" else float(bandwidth)
    if not (np.isfinite(h) and h > 0):
        raise IngestError(f"week {week}: bandwidth must be positive, got {h}")
    z = (g.x[:, None] - scores[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (scores.size * h * np.sqrt(2 * np.pi))
    mass = integrate_x(dens, g)
    if not mass > 0:
        raise IngestError(f"week {week}: density underflows on [-1, 1] (bandwidth {h:.3g})")
    return DensitySlice(dens / mass, week)


def _spline_basis(g: Grid, knot_stride: int) -> np.ndarray:
    inner = g.x[knot_stride:-1:knot_stride]
    inner = inner[np.abs(inner - 1.0) > 1e-12]
    knots = np.concatenate([[-1.0] * 4, inner, [1.0] * 4])
    return BSpline.design_matrix(g.x, knots, 3).toarray()


def _spline_frame(g: Grid, knot_stride: int) -> np.ndarray:
    """Orthonormal basis (as nodal vectors) of cubic splines whose nodal values
    are discretely Neumann."""
    B = _spline_basis(g, knot_stride)
    N = null_space(np.vstack([g.Dx[0] @ B, g.Dx[-1] @ B]))
    Q, _ = np.linalg.qr(B @ N)
    return Q


def spline_smooth(values: np.ndarray, g: Grid, knot_stride: int = 2) -> np.ndarray:
    """Closest nonnegative Neumann cubic spline (in nodal least squares) to ``values``.

    With ``Q`` an orthonormal frame of the spline space the problem is
    ``min |z - Q^T f|`` subject to ``Q z >= 0``.  Its dual is a nonnegative
    least-squares problem ``min |Q^T lam + Q^T f|, lam >= 0`` with
    ``z = Q^T f + Q^T lam``, so feasible inputs are returned unchanged.
    """
    f = g.check_slice(values)
    Q = _spline_frame(g, knot_stride)
    z0 = Q.T @ f
    lam, _ = nnls(Q.T, -z0)
    return np.maximum(Q @ (z0 + Q.T @ lam), 0.0)


def hermite_edge_profile(g: Grid, width: int) -> np.ndarray:
    """Correction shape for the left edge: ``1 - 3 xi^2 + 2 xi^3`` over ``width`` nodes,
    scaled so its one-sided derivative at x=-1 equals 1."""
    width = max(1, min(int(width), g.nx // 2 - 1))
    xi = np.arange(width + 1) / width
    prof = np.zeros(g.nx)
    prof[: width + 1] = 1.0 - 3.0 * xi**2 + 2.0 * xi**3
    return prof / (g.Dx[0] @ prof)


def adjust_endpoints(values: np.ndarray, g: Grid, width: int = 2) -> np.ndarray:
    """Subtract a Hermite-shaped edge correction so the one-sided derivative vanishes at x=+-1.

    The identity when the discrete Neumann condition already holds.
    """
    f = np.array(values, dtype=float, copy=True)
    left = hermite_edge_profile(g, width)
    right = left[::-1] / (g.Dx[-1] @ left[::-1])
    dl, dr = neumann_defect(f, g)
    f = f - dl * left - dr * right
    if np.any(f < 0):
        # clamp, then move node 1 (or nx-2) to restore the stencil without going negative
        f = neumann_inner(np.maximum(f, 0.0))
    return f


def preprocess(d: DensitySlice, g: Grid, eps_adjust: int = 2, knot_stride: int = 2) -> DensitySlice:
    """Cubic-spline smoothing with Neumann ends, clamping and renormalization.

    Smoothing is a least-squares fit by cubic splines with a knot at every
    ``knot_stride``-th node, restricted to nodal values that satisfy the discrete
    Neumann condition (see ``spline_smooth``).  The Hermite edge correction is a
    safeguard and leaves already-Neumann slices untouched.
    """
    s = adjust_endpoints(spline_smooth(d.values, g, knot_stride), g, eps_adjust)
    mass = integrate_x(s, g)
    if not mass > 0:
        raise IngestError(f"week {d.week}: smoothed density has no mass")
    return DensitySlice(s / mass, d.week)


def check_density(values: np.ndarray, g: Grid, name: str = "density") -> None:
    """Raise unless ``values`` is a nonnegative, unit-mass, discretely Neumann slice."""
    f = g.check_slice(values, name)
    if not np.all(np.isfinite(f)):
        raise IngestError(f"{name}: non-finite values")
    if np.any(f < 0):
        raise IngestError(f"{name}: negative values (min {f.min():.3g})")
    mass = integrate_x(f, g)
    if abs(mass - 1.0) > MASS_TOL:
        raise IngestError(f"{name}: mass {mass:.12g} differs from 1")
    defect = np.max(np.abs(neumann_defect(f, g)))
    if defect > NEUMANN_TOL:
        raise IngestError(f"{name}: one-sided derivative {defect:.3g} at x=+-1 (Neumann violated)")


def period_densities(
    series: SentimentSeries,
    start: datetime,
    g: Grid,
    n_weeks: int = 11,
    bandwidth: float | str = "auto",
    eps_adjust: int = 2,
) -> list[DensitySlice]:
    """Weekly preprocessed densities; aborts if any week has fewer than two scores."""
    wb = weekly_bins(series, start, n_weeks)
    short = [k for k, b in enumerate(wb.bins) if len(b) < 2]
    if short:
        k = short[0]
        raise IngestError(
            f"week {k + 1} (starting {(start + timedelta(days=7 * k)).date()}) has "
            f"{len(wb.bins[k])} score(s); at least 2 are required"
        )
    return [preprocess(kde_density(b, g, bandwidth, week=k), g, eps_adjust) for k, b in enumerate(wb.bins)]
