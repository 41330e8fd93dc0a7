"""Constrained minimization of the convexified objective and the period forecast.

Equality constraints are removed by elimination: pinned time slices are copied
in verbatim and the edge nodes x=+-1 are dependent variables given by the
discrete Neumann closure ``f[0] = (4 f[1] - f[2]) / 3`` (and its mirror).
The remaining interior nodes are minimized with L-BFGS and a backtracking
Armijo line search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .functional import Forcing, Objective, State
from .grid import Grid, neumann_defect
from .ingest import check_density
from .init_estimate import InitEstimate, estimate_initial_value
from .metrics import MetricsReport, metrics_report
from .params import MfgParams

log = logging.getLogger(__name__)

N_PERIOD_WEEKS = 11


class SolverError(RuntimeError):
    def __init__(self, message: str, iterate: np.ndarray | None = None):
        super().__init__(message)
        self.iterate = iterate


@dataclass
class SolverOptions:
    max_iter: int = 5000
    tol: float = 1e-5
    history: int = 10
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    bound: float | None = None


@dataclass
class ConstraintSet:
    """Pinned slices by time index plus the implicit Neumann edge conditions."""

    pinned_u: dict[int, np.ndarray]
    pinned_m: dict[int, np.ndarray]
    grid: Grid

    def __post_init__(self):
        g = self.grid
        for name, pins in (("u", self.pinned_u), ("m", self.pinned_m)):
            for j, v in pins.items():
                if not 0 <= j < g.nt:
                    raise ValueError(f"pinned {name} slice at invalid time index {j}")
                pins[j] = g.check_slice(v, f"pinned {name}[{j}]").copy()
        self.free_u = [j for j in range(g.nt) if j not in self.pinned_u]
        self.free_m = [j for j in range(g.nt) if j not in self.pinned_m]

    @property
    def n_free(self) -> int:
        return (self.grid.nx - 2) * (len(self.free_u) + len(self.free_m))

    @classmethod
    def for_period(cls, u0: np.ndarray, m_weeks, g: Grid) -> "ConstraintSet":
        """u pinned at t=0, m pinned at the first three time nodes."""
        return cls({0: u0}, {j: np.asarray(getattr(s, "values", s)) for j, s in enumerate(m_weeks[:3])}, g)


def _with_edges(interior: np.ndarray) -> np.ndarray:
    nx = interior.shape[0] + 2
    f = np.empty((nx,) + interior.shape[1:])
    f[1:-1] = interior
    f[0] = (4.0 * f[1] - f[2]) / 3.0
    f[-1] = (4.0 * f[-2] - f[-3]) / 3.0
    return f


def _edge_adjoint(G: np.ndarray) -> np.ndarray:
    """Transpose of ``_with_edges`` applied to a full-height gradient block."""
    out = G[1:-1].copy()
    out[0] += 4.0 / 3.0 * G[0]
    out[1] -= 1.0 / 3.0 * G[0]
    out[-1] += 4.0 / 3.0 * G[-1]
    out[-2] -= 1.0 / 3.0 * G[-1]
    return out


def pack_free(s: State, c: ConstraintSet) -> np.ndarray:
    return np.concatenate([s.u[1:-1, c.free_u].ravel(), s.m[1:-1, c.free_m].ravel()])


def unpack_free(v: np.ndarray, c: ConstraintSet) -> State:
    g = c.grid
    v = np.asarray(v, dtype=float)
    if v.size != c.n_free:
        raise ValueError(f"free vector has {v.size} entries, constraint set expects {c.n_free}")
    nu = (g.nx - 2) * len(c.free_u)
    u = np.empty(g.shape)
    m = np.empty(g.shape)
    u[:, c.free_u] = _with_edges(v[:nu].reshape(g.nx - 2, len(c.free_u)))
    m[:, c.free_m] = _with_edges(v[nu:].reshape(g.nx - 2, len(c.free_m)))
    for j, sl in c.pinned_u.items():
        u[:, j] = sl
    for j, sl in c.pinned_m.items():
        m[:, j] = sl
    return State(u, m)


def free_gradient(gu: np.ndarray, gm: np.ndarray, c: ConstraintSet) -> np.ndarray:
    return np.concatenate([_edge_adjoint(gu[:, c.free_u]).ravel(), _edge_adjoint(gm[:, c.free_m]).ravel()])


@dataclass
class SolveResult:
    state: State
    iterations: int
    final_optimality: float
    objective_trace: list[float]
    constraint_report: dict
    converged: bool
    message: str
    metadata: dict = field(default_factory=dict)


def constraint_report(s: State, c: ConstraintSet) -> dict:
    g = c.grid
    pin_u = max((float(np.max(np.abs(s.u[:, j] - v))) for j, v in c.pinned_u.items()), default=0.0)
    pin_m = max((float(np.max(np.abs(s.m[:, j] - v))) for j, v in c.pinned_m.items()), default=0.0)
    return {
        "pinned_u": pin_u,
        "pinned_m": pin_m,
        "neumann_u": float(np.max(np.abs(neumann_defect(s.u, g)))),
        "neumann_m": float(np.max(np.abs(neumann_defect(s.m, g)))),
    }


def _two_loop(grad: np.ndarray, S: list, Y: list) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun, x0: np.ndarray, opts: SolverOptions):
    """L-BFGS with backtracking Armijo line search.

    ``fun(x)`` returns ``(value, gradient)``.  Returns
    ``(x, iterations, optimality, trace, converged, message)``.
    """
    x = np.array(x0, dtype=float)
    clip = (lambda z: np.clip(z, -opts.bound, opts.bound)) if opts.bound else (lambda z: z)
    x = clip(x)
    f, gr = fun(x)
    if not np.isfinite(f):
        raise SolverError("objective is not finite at the initial guess", x)
    trace = [f]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    for it in range(opts.max_iter):
        opt = float(np.max(np.abs(gr))) if gr.size else 0.0
        if opt <= opts.tol:
            return x, it, opt, trace, True, "first-order optimality reached"
        d = _two_loop(gr, S, Y)
        slope = gr @ d
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -gr
            slope = -(gr @ gr)
        step = 1.0 if S else min(1.0, 1.0 / max(opt, 1e-300))
        for _ in range(opts.max_backtracks):
            x_new = clip(x + step * d)
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + opts.armijo_c1 * step * slope:
                break
            step *= opts.backtrack
        else:
            if not np.isfinite(f_new):
                raise SolverError(f"non-finite objective during line search at iteration {it}", x_new)
            return x, it, opt, trace, False, "line search failed to find sufficient decrease"
        s_vec = x_new - x
        y_vec = g_new - gr
        if s_vec @ y_vec > 1e-12 * np.sqrt((s_vec @ s_vec) * (y_vec @ y_vec)):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.history:
                S.pop(0)
                Y.pop(0)
        x, f, gr = x_new, f_new, g_new
        trace.append(f)
    opt = float(np.max(np.abs(gr))) if gr.size else 0.0
    converged = opt <= opts.tol
    return x, opts.max_iter, opt, trace, converged, "first-order optimality reached" if converged else "iteration cap reached"


def minimize(
    p: MfgParams,
    g: Grid,
    c: ConstraintSet,
    forcing: Forcing | None = None,
    opts: SolverOptions | None = None,
    initial: State | None = None,
) -> SolveResult:
    """Minimize the objective over the free nodes.  Results hitting the iteration
    cap are returned with ``converged=False`` rather than raised."""
    opts = opts or SolverOptions()
    obj = Objective(p, g, forcing)
    if initial is None:
        initial = State(np.zeros(g.shape), np.zeros(g.shape))

    def fun(v):
        s = unpack_free(v, c)
        J, gu, gm = obj.value_and_grad(s.u, s.m)
        return J, free_gradient(gu, gm, c)

    x, it, opt, trace, converged, msg = lbfgs(fun, pack_free(initial, c), opts)
    state = unpack_free(x, c)
    if not converged:
        log.warning("minimize stopped after %d iterations: %s (optimality %.3g)", it, msg, opt)
    return SolveResult(
        state=state,
        iterations=it,
        final_optimality=opt,
        objective_trace=trace,
        constraint_report=constraint_report(state, c),
        converged=converged,
        message=msg,
        metadata={"n_free": c.n_free},
    )


def build_initial_guess(u0: np.ndarray, m_weeks, g: Grid) -> State:
    """u held at u0 for all t; m equal to the data on the first three nodes and
    their average afterwards."""
    u0 = g.check_slice(u0, "u0")
    ms = [g.check_slice(getattr(s, "values", s), f"week {k}") for k, s in enumerate(m_weeks[:3])]
    avg = (ms[0] + ms[1] + ms[2]) / 3.0
    m = np.repeat(avg[:, None], g.nt, axis=1)
    for j in range(min(3, g.nt)):
        m[:, j] = ms[j]
    return State(np.repeat(u0[:, None], g.nt, axis=1), m)


@dataclass
class Forecast:
    result: SolveResult
    metrics: MetricsReport
    estimate: InitEstimate
    m_data: np.ndarray


def forecast(
    period_data,
    p: MfgParams,
    g: Grid,
    opts: SolverOptions | None = None,
    eps: float = 0.2,
    mode: str = "standard",
    formula: str = "standard",
) -> Forecast:
    """Estimate u(x, 0) from weeks 1-3, minimize with the data constraints and
    score the solution against all weeks."""
    if len(period_data) < N_PERIOD_WEEKS:
        raise ValueError(f"a period needs {N_PERIOD_WEEKS} weekly slices, got {len(period_data)}")
    if g.nt != N_PERIOD_WEEKS:
        raise ValueError(f"grid must have nt={N_PERIOD_WEEKS} time nodes (one per week), got {g.nt}")
    slices = [np.asarray(getattr(s, "values", s), dtype=float) for s in period_data[:N_PERIOD_WEEKS]]
    for k, v in enumerate(slices):
        check_density(v, g, f"week {k + 1}")
    est = estimate_initial_value(slices[:3], p, g, eps=eps, mode=mode, formula=formula)
    cons = ConstraintSet.for_period(est.u0, slices, g)
    guess = build_initial_guess(est.u0, slices, g)
    res = minimize(p, g, cons, opts=opts, initial=guess)
    res.metadata.update(
        beta=p.beta, r=p.r, u_left=p.u_left, alpha=p.alpha,
        lam=p.carleman.lam, a=p.carleman.a, c=p.carleman.c, d=p.carleman.d,
    )
    m_data = np.column_stack(slices)
    return Forecast(res, metrics_report(res.state, m_data, p, g), est, m_data)
