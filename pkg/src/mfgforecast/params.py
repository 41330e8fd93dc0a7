"""Model parameters shared by the functional, solver and calibration layers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .carleman import CarlemanParams
from .grid import Grid, GridError

KernelSpec = Union[float, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]

# Calibrated (u(-1,0), beta, r) for the ten 11-week periods of the COVID-19
# sentiment study, with their calendar ranges.
PERIOD_PRESETS: dict[int, dict] = {
    1: dict(label="Mar 2 -- May 17, 2020", start="2020-03-02", u_left=2.0, beta=0.25, r=50.0),
    2: dict(label="May 18 -- Aug 2, 2020", start="2020-05-18", u_left=1.0, beta=0.05, r=80.0),
    3: dict(label="Aug 3 -- Oct 18, 2020", start="2020-08-03", u_left=2.0, beta=0.5, r=75.0),
    4: dict(label="Oct 19, 2020 -- Jan 3, 2021", start="2020-10-19", u_left=3.8, beta=0.3, r=80.0),
    5: dict(label="Jan 4 -- Mar 21, 2021", start="2021-01-04", u_left=3.7, beta=1.5, r=100.0),
    6: dict(label="Mar 22 -- Jun 6, 2021", start="2021-03-22", u_left=5.0, beta=3.0, r=200.0),
    7: dict(label="Jun 7 -- Aug 22, 2021", start="2021-06-07", u_left=1.6, beta=2.75, r=300.0),
    8: dict(label="Aug 23 -- Nov 7, 2021", start="2021-08-23", u_left=2.6, beta=1.5, r=125.0),
    9: dict(label="Nov 8, 2021 -- Jan 23, 2022", start="2021-11-08", u_left=3.0, beta=0.75, r=75.0),
    10: dict(label="Jan 24 -- Apr 10, 2022", start="2022-01-24", u_left=4.0, beta=2.5, r=175.0),
}


class ParamError(ValueError):
    pass


@dataclass(frozen=True)
class MfgParams:
    beta: float
    r: float
    kernel: KernelSpec = 1.0
    carleman: CarlemanParams = field(default_factory=CarlemanParams)
    alpha: float = 1e-4
    u_left: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ParamError(f"beta must be positive, got {self.beta}")
        if not np.isfinite(self.r):
            raise ParamError(f"r must be finite, got {self.r}")
        if not 0 <= self.alpha < 1:
            raise ParamError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not np.isfinite(self.u_left):
            raise ParamError(f"u_left must be finite, got {self.u_left}")

    def with_(self, **changes) -> "MfgParams":
        return replace(self, **changes)

    @classmethod
    def from_preset(cls, period: int, **overrides) -> "MfgParams":
        if period not in PERIOD_PRESETS:
            raise ParamError(f"period preset must be 1..10, got {period}")
        row = PERIOD_PRESETS[period]
        kw = dict(beta=row["beta"], r=row["r"], u_left=row["u_left"])
        kw.update(overrides)
        return cls(**kw)


def kernel_matrix(kernel: KernelSpec, g: Grid) -> np.ndarray:
    """Tabulate ``K(x_i, y_j)`` on the grid nodes as an ``(nx, nx)`` array."""
    if callable(kernel):
        X, Y = np.meshgrid(g.x, g.x, indexing="ij")
        K = np.asarray(kernel(X, Y), dtype=float)
        K = np.broadcast_to(K, (g.nx, g.nx)).copy()
    elif np.ndim(kernel) == 0:
        K = np.full((g.nx, g.nx), float(kernel))
    else:
        K = np.asarray(kernel, dtype=float)
        if K.shape != (g.nx, g.nx):
            raise GridError(f"tabulated kernel has shape {K.shape}, expected {(g.nx, g.nx)}")
    if not np.all(np.isfinite(K)):
        raise ParamError("kernel contains non-finite values")
    return K
