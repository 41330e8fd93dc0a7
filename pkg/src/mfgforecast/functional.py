"""Residuals of the 1D mean-field-game system and the Carleman-weighted objective.

The HJB residual is

    L1 = u_t + beta u_xx + r/2 u_x^2 + int K(x, y) m(y, t) dy + f1

and the Fokker-Planck residual is

    L2 = m_t - beta m_xx + d/dx(r m u_x) + f2,

with forcing terms ``f1, f2`` that default to zero.  The objective is

    J = e^{-2 a c^lam} iint (L1^2 + q d L2^2) phi^2 dx dt
        + alpha iint (u_x^2 + m_x^2 + u_xx^2 + m_xx^2) dx dt

evaluated with trapezoid quadrature on the grid nodes.  ``grad_J`` is the exact
gradient of this discrete sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carleman import q_factor, residual_weights
from .grid import Grid
from .params import MfgParams, kernel_matrix


@dataclass(frozen=True)
class State:
    u: np.ndarray
    m: np.ndarray

    def copy(self) -> "State":
        return State(self.u.copy(), self.m.copy())


@dataclass(frozen=True)
class Forcing:
    f1: np.ndarray | float = 0.0
    f2: np.ndarray | float = 0.0

    @classmethod
    def zero(cls) -> "Forcing":
        return cls()


class Objective:
    """Precomputed operators for fast repeated evaluation of ``J`` and its gradient."""

    def __init__(self, params: MfgParams, g: Grid, forcing: Forcing | None = None):
        self.params = params
        self.grid = g
        forcing = forcing or Forcing.zero()
        self.f1 = np.broadcast_to(np.asarray(forcing.f1, dtype=float), g.shape)
        self.f2 = np.broadcast_to(np.asarray(forcing.f2, dtype=float), g.shape)
        # trapezoid weights in y folded into the kernel
        self.Kw = kernel_matrix(params.kernel, g) * g.wx[None, :]
        cp = params.carleman
        self.qd = q_factor(cp) * cp.d
        self.W = np.outer(g.wx, g.wt * residual_weights(g.t, cp))
        self.Wreg = np.outer(g.wx, g.wt)
        self.Dx, self.Dxx, self.Dt = g.Dx, g.Dxx, g.Dt

    def residuals(self, u: np.ndarray, m: np.ndarray):
        p = self.params
        ux = self.Dx @ u
        L1 = u @ self.Dt.T + p.beta * (self.Dxx @ u) + 0.5 * p.r * ux**2 + self.Kw @ m + self.f1
        L2 = m @ self.Dt.T - p.beta * (self.Dxx @ m) + self.Dx @ (p.r * m * ux) + self.f2
        return L1, L2, ux

    def value(self, u: np.ndarray, m: np.ndarray) -> float:
        return self.value_and_grad(u, m, need_grad=False)[0]

    def value_and_grad(self, u: np.ndarray, m: np.ndarray, need_grad: bool = True):
        p = self.params
        L1, L2, ux = self.residuals(u, m)
        uxx = self.Dxx @ u
        mx = self.Dx @ m
        mxx = self.Dxx @ m
        fit = np.sum(self.W * (L1**2 + self.qd * L2**2))
        reg = np.sum(self.Wreg * (ux**2 + mx**2 + uxx**2 + mxx**2))
        J = float(fit + p.alpha * reg)
        if not need_grad:
            return J, None, None

        A1 = 2.0 * self.W * L1
        A2 = 2.0 * self.qd * self.W * L2
        DxT_A2 = self.Dx.T @ A2
        gu = (
            A1 @ self.Dt
            + p.beta * (self.Dxx.T @ A1)
            + self.Dx.T @ (p.r * ux * A1)
            + self.Dx.T @ (p.r * m * DxT_A2)
        )
        gm = self.Kw.T @ A1 + A2 @ self.Dt - p.beta * (self.Dxx.T @ A2) + p.r * ux * DxT_A2
        if p.alpha:
            gu = gu + 2.0 * p.alpha * (self.Dx.T @ (self.Wreg * ux) + self.Dxx.T @ (self.Wreg * uxx))
            gm = gm + 2.0 * p.alpha * (self.Dx.T @ (self.Wreg * mx) + self.Dxx.T @ (self.Wreg * mxx))
        return J, gu, gm


def kernel_integral(m: np.ndarray, kernel, g: Grid) -> np.ndarray:
    """Trapezoid quadrature of ``K(x, .) m(., t)`` for every node."""
    m = np.asarray(m, dtype=float)
    return (kernel_matrix(kernel, g) * g.wx[None, :]) @ m


def op_L1(s: State, p: MfgParams, g: Grid, forcing: Forcing | None = None) -> np.ndarray:
    u, m = g.check_field(s.u, "u"), g.check_field(s.m, "m")
    return Objective(p, g, forcing).residuals(u, m)[0]


def op_L2(s: State, p: MfgParams, g: Grid, forcing: Forcing | None = None) -> np.ndarray:
    u, m = g.check_field(s.u, "u"), g.check_field(s.m, "m")
    return Objective(p, g, forcing).residuals(u, m)[1]


def eval_J(s: State, p: MfgParams, g: Grid, forcing: Forcing | None = None) -> float:
    u, m = g.check_field(s.u, "u"), g.check_field(s.m, "m")
    return Objective(p, g, forcing).value(u, m)


def grad_J(s: State, p: MfgParams, g: Grid, forcing: Forcing | None = None):
    """Exact gradient of ``eval_J`` with respect to every nodal value of ``(u, m)``."""
    u, m = g.check_field(s.u, "u"), g.check_field(s.m, "m")
    _, gu, gm = Objective(p, g, forcing).value_and_grad(u, m)
    return gu, gm
