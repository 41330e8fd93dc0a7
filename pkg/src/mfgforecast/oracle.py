"""Independent ground truth for verification.

* ``step_fpk`` / ``simulate_fpk``: implicit-Euler Fokker-Planck marching with a
  conservative flux form and zero-flux ends, so mass is conserved to solver
  precision.  It shares nothing with the objective's stencils except the node
  positions.
* ``make_manufactured``: closed-form (u*, m*) with compensating forcing.
* ``closed_form_hjb`` / ``synthetic_period``: an exact HJB solution for a
  constant kernel (Cole-Hopf linearisation) driving the FPK oracle, which gives
  weekly density data that the full model can actually reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .functional import Forcing, Objective
from .grid import Grid, integrate_x, make_grid, neumann_edges
from .ingest import DensitySlice, preprocess
from .params import MfgParams


class OracleError(ValueError):
    pass


@dataclass
class SyntheticScenario:
    u_star: np.ndarray
    m_star: np.ndarray
    forcing: Forcing
    description: str = ""
    meta: dict = field(default_factory=dict)


def _fpk_bands(u_slice: np.ndarray, beta: float, r: float, h: float) -> np.ndarray:
    """Banded (1, 1) form of the flux operator A with ``W dm/dt = -A m``.

    Interface flux ``F = -beta (m_{i+1} - m_i)/h + r u_x (m_i + m_{i+1})/2``,
    with ``u_x`` the interface difference of ``u_slice`` and zero flux at x=+-1.
    """
    n = u_slice.size
    vel = r * np.diff(u_slice) / h  # drift at the n-1 interfaces
    # flux F_k = a_k m_k + b_k m_{k+1}
    a = beta / h + 0.5 * vel
    b = -beta / h + 0.5 * vel
    ab = np.zeros((3, n))
    # row i gets +F_{i+1/2} - F_{i-1/2}
    ab[1, :-1] += a          # d/dm_i of F_{i+1/2}
    ab[0, 1:] += b           # d/dm_{i+1} of F_{i+1/2}, superdiagonal
    ab[1, 1:] -= b           # d/dm_{i+1} of -F_{i+1/2} in row i+1
    ab[2, :-1] -= a          # d/dm_i of -F_{i+1/2} in row i+1, subdiagonal
    return ab


def step_fpk(m: np.ndarray, u_slice: np.ndarray, p: MfgParams, g: Grid, dt: float | None = None) -> np.ndarray:
    """One implicit-Euler step of ``m_t = beta m_xx - d/dx(r m u_x)``."""
    m = g.check_slice(m, "m")
    u_slice = g.check_slice(u_slice, "u")
    dt = g.ht if dt is None else dt
    w = g.wx
    ab = dt * _fpk_bands(u_slice, p.beta, p.r, g.hx)
    ab[1] += w
    try:
        out = solve_banded((1, 1), ab, w * m)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"singular FPK system (beta={p.beta}, dt={dt}, hx={g.hx}): {exc}") from None
    if not np.all(np.isfinite(out)):
        raise OracleError(f"FPK step produced non-finite values (beta={p.beta}, dt={dt}, hx={g.hx})")
    return out


UField = np.ndarray | Callable[[np.ndarray, float], np.ndarray]


def _u_at(u: UField, g: Grid, t: float) -> np.ndarray:
    if callable(u):
        return np.asarray(u(g.x, t), dtype=float)
    # piecewise-linear in time between grid nodes
    j = min(int(np.floor(t / g.ht + 1e-12)), g.nt - 2)
    theta = t / g.ht - j
    return (1.0 - theta) * u[:, j] + theta * u[:, j + 1]


def simulate_fpk(m0, u: UField, p: MfgParams, g: Grid, substeps: int = 1) -> np.ndarray:
    """Density field on the grid's time nodes using ``substeps`` implicit steps per interval.

    ``u`` is either an ``(nx, nt)`` field, interpolated linearly in time, or a
    callable ``u(x, t)``.
    """
    if substeps < 1:
        raise OracleError(f"substeps must be >= 1, got {substeps}")
    if not callable(u):
        u = g.check_field(u, "u")
    m = g.check_slice(m0, "m0").copy()
    out = np.empty(g.shape)
    out[:, 0] = m
    dt = g.ht / substeps
    for j in range(g.nt - 1):
        for k in range(1, substeps + 1):
            t = j * g.ht + k * dt
            m = step_fpk(m, _u_at(u, g, t), p, g, dt)
        out[:, j + 1] = m
    return out


# -- manufactured solutions -------------------------------------------------


def _mms_closed_forms(A: float, B: float, g: Grid):
    X, Tm = g.mesh()
    c, s, e = np.cos(np.pi * X), np.sin(np.pi * X), np.exp(-Tm)
    u = A * c * e
    m = 0.5 * (1.0 + B * c * e)
    derivs = dict(
        u_t=-u,
        u_x=-A * np.pi * s * e,
        u_xx=-(np.pi**2) * u,
        m_t=-0.5 * B * c * e,
        m_x=-0.5 * B * np.pi * s * e,
        m_xx=-0.5 * B * np.pi**2 * c * e,
    )
    return u, m, derivs


def make_manufactured(
    p: MfgParams, g: Grid, A: float = 0.5, B: float = 0.5, forcing: str = "analytic"
) -> SyntheticScenario:
    """Manufactured pair ``u* = A cos(pi x) e^{-t}``, ``m* = (1 + B cos(pi x) e^{-t})/2``.

    ``forcing="analytic"`` evaluates ``-L1, -L2`` of the closed forms at the
    nodes (the kernel term by exact integration for a constant kernel, by grid
    quadrature otherwise).  ``forcing="discrete"`` uses the grid operators, so
    the stored nodal pair has zero discrete residual.

    The nodal fields get their edge values replaced by the discrete Neumann
    closure, and m* a constant shift per slice restoring unit mass; both
    changes are O(h^4).
    """
    if not abs(B) < 1:
        raise OracleError(f"|B| must be < 1 to keep m* positive, got {B}")
    u, m, dv = _mms_closed_forms(A, B, g)
    u = neumann_edges(u)
    m = neumann_edges(m)
    m = m + (1.0 - g.wx @ m)[None, :] / 2.0
    if np.any(m <= 0):
        raise OracleError("manufactured density is not positive")
    if forcing == "analytic":
        if np.ndim(p.kernel) == 0 and not callable(p.kernel):
            kint = np.full(g.shape, float(p.kernel))  # int m* dy = 1 exactly
        else:
            kint = Objective(p.with_(kernel=p.kernel), g).Kw @ m
        L1 = dv["u_t"] + p.beta * dv["u_xx"] + 0.5 * p.r * dv["u_x"] ** 2 + kint
        mc = 0.5 * (1.0 + B * np.cos(np.pi * g.mesh()[0]) * np.exp(-g.mesh()[1]))
        L2 = dv["m_t"] - p.beta * dv["m_xx"] + p.r * (dv["m_x"] * dv["u_x"] + mc * dv["u_xx"])
    elif forcing == "discrete":
        L1, L2, _ = Objective(p, g).residuals(u, m)
    else:
        raise OracleError(f"forcing must be 'analytic' or 'discrete', got {forcing!r}")
    return SyntheticScenario(
        u_star=u,
        m_star=m,
        forcing=Forcing(-L1, -L2),
        description=f"u*=A cos(pi x) e^-t, m*=(1+B cos(pi x) e^-t)/2, A={A}, B={B}, forcing={forcing}",
        meta=dict(A=A, B=B, forcing=forcing),
    )


# -- closed-form HJB scenario ------------------------------------------------


def closed_form_hjb(
    beta: float,
    r: float,
    u_left: float = 0.0,
    amplitudes=(0.3,),
    kernel_value: float = 1.0,
    base: float = 1.0,
):
    """Exact solution of ``u_t + beta u_xx + r/2 u_x^2 + kernel_value = 0`` with zero-flux ends.

    With ``w = exp(r u / (2 beta))`` the equation becomes the linear
    ``w_t + beta w_xx = -(r kernel_value / (2 beta)) w``, solved by cosine modes
    ``base + sum_k a_k cos(k pi x) exp(beta k^2 pi^2 t)``.  For a unit-mass
    density the constant kernel integral equals ``kernel_value``.  Returns
    callables ``u(x, t)`` and ``u_x(x, t)`` shifted so ``u(-1, 0) = u_left``.
    """
    amps = np.asarray(amplitudes, dtype=float)
    ks = np.arange(1, amps.size + 1)
    if r == 0:
        raise OracleError("r must be nonzero")

    def series(x, t):
        x = np.asarray(x, dtype=float)[..., None]
        grow = np.exp(beta * (ks * np.pi) ** 2 * np.asarray(t, dtype=float)[..., None])
        return base + np.sum(amps * np.cos(ks * np.pi * x) * grow, axis=-1)

    def series_x(x, t):
        x = np.asarray(x, dtype=float)[..., None]
        grow = np.exp(beta * (ks * np.pi) ** 2 * np.asarray(t, dtype=float)[..., None])
        return -np.sum(amps * ks * np.pi * np.sin(ks * np.pi * x) * grow, axis=-1)

    scale = 2.0 * beta / r
    shift = u_left - scale * np.log(series(-1.0, 0.0))

    def u(x, t):
        w = series(x, t)
        if np.any(w <= 0):
            raise OracleError("Cole-Hopf series is not positive; reduce the amplitudes")
        return shift - kernel_value * t + scale * np.log(w)

    def ux(x, t):
        return scale * series_x(x, t) / series(x, t)

    return u, ux


def default_initial_density(x: np.ndarray) -> np.ndarray:
    """Smooth, positive, Neumann-compatible profile peaked at neutral sentiment."""
    return 1.0 + 0.35 * np.cos(np.pi * x) + 0.2 * np.cos(2 * np.pi * x)


@dataclass
class SyntheticPeriod:
    weeks: list[DensitySlice]
    m_true: np.ndarray
    u_true: np.ndarray
    params: MfgParams
    grid: Grid


def synthetic_period(
    p: MfgParams,
    g: Grid,
    amplitudes=(0.3,),
    m0: Callable[[np.ndarray], np.ndarray] | None = None,
    refine: int = 8,
    substeps: int = 50,
    preprocess_slices: bool = True,
) -> SyntheticPeriod:
    """Weekly densities generated by the FPK oracle under an exact HJB solution.

    The oracle runs on a grid ``refine`` times finer in x with ``substeps``
    implicit steps per week and is sampled back onto ``g``.  Only constant
    kernels are supported (the HJB then decouples from m).
    """
    if callable(p.kernel) or np.ndim(p.kernel) != 0:
        raise OracleError("synthetic_period needs a constant kernel")
    u_fn, _ = closed_form_hjb(p.beta, p.r, p.u_left, amplitudes, float(p.kernel))
    fine = make_grid((g.nx - 1) * refine + 1, g.nt, g.T)
    m0_fn = m0 or default_initial_density
    mf0 = neumann_edges(np.asarray(m0_fn(fine.x), dtype=float))
    if np.any(mf0 <= 0):
        raise OracleError("initial density must be positive")
    mf0 = mf0 / integrate_x(mf0, fine)
    mf = simulate_fpk(mf0, u_fn, p, fine, substeps)
    m_true = mf[::refine, :]
    u_true = np.column_stack([u_fn(g.x, t) for t in g.t])
    weeks = []
    for j in range(g.nt):
        col = m_true[:, j] / integrate_x(m_true[:, j], g)
        s = DensitySlice(col, week=j)
        weeks.append(preprocess(s, g) if preprocess_slices else s)
    return SyntheticPeriod(weeks, m_true, u_true, p, g)
