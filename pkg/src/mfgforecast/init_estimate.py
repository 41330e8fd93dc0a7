"""Estimate the initial value function u(x, 0) from the first three weekly densities.

With r constant, the Fokker-Planck equation at t=0 gives a first-order linear
ODE for v = u_x(., 0):

    v_x + (m_x / m) v = p,   p = (beta m_xx - m_t) / (r m),   v(-1) = 0,

whose solution, via the integrating factor m, is
``v(x) = int_{-1}^x p(y) exp(-int_y^x m_x/m ds) dy = (1/m(x)) int_{-1}^x m p dy``.
The variant with ``exp(+int m_x/m)`` (i.e. ``m(x) int p/m``) does not solve the
ODE; it is kept as ``formula="as-printed"`` for reproduction studies only.
A cubic cut-off near x=1 forces v(1) = 0, and u(., 0) is recovered by
integrating v from the free boundary value u(-1, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .grid import Grid, d1x, d2x, dt_forward3, neumann_inner
from .params import MfgParams

DENSITY_FLOOR = 1e-4


class EstimateError(ValueError):
    pass


@dataclass
class InitEstimate:
    u0: np.ndarray
    ux0: np.ndarray
    p0: np.ndarray
    min_density: float
    stencil_mode: str
    floored_nodes: int = 0
    extras: dict = field(default_factory=dict)


def cutoff_chi(g: Grid, eps: float = 0.2) -> np.ndarray:
    if not 0 < eps < 1:
        raise EstimateError(f"cut-off width must lie in (0, 1), got {eps}")
    xi = np.clip((g.x - 1.0 + eps) / eps, 0.0, 1.0)
    return 1.0 - 3.0 * xi**2 + 2.0 * xi**3


def compute_p(m0, mt0, mxx0, beta: float, r: float, floor: float = DENSITY_FLOOR) -> np.ndarray:
    m0, mt0, mxx0 = (np.asarray(a, dtype=float) for a in (m0, mt0, mxx0))
    if r == 0:
        raise EstimateError("r must be nonzero to solve for u_x(x, 0)")
    if np.all(m0 < floor):
        raise EstimateError(f"initial density lies below the floor {floor} everywhere")
    return (beta * mxx0 - mt0) / (r * np.maximum(m0, floor))


def _cumtrapz(f: np.ndarray, g: Grid) -> np.ndarray:
    return cumulative_trapezoid(f, dx=g.hx, initial=0.0)


FORMULAS = ("standard", "as-printed")


def _exponent_sign(formula: str) -> float:
    if formula == "standard":
        return -1.0
    if formula == "as-printed":
        return 1.0
    raise EstimateError(f"unknown formula {formula!r}; expected one of {FORMULAS}")


def solve_ux0(p, m0, chi, g: Grid, floor: float = DENSITY_FLOOR, formula: str = "standard") -> np.ndarray:
    """``chi(x) / m(x) int_{-1}^x m p dy`` with trapezoid quadrature."""
    p, m0, chi = g.check_slice(p, "p"), g.check_slice(m0, "m0"), g.check_slice(chi, "chi")
    m = np.maximum(m0, floor)
    if _exponent_sign(formula) < 0:
        return chi * _cumtrapz(m * p, g) / m
    return chi * m * _cumtrapz(p / m, g)


def solve_ux0_nested(p, m0, chi, g: Grid, floor: float = DENSITY_FLOOR, formula: str = "standard") -> np.ndarray:
    """Double-integral form ``chi(x) int p(y) exp(-+int_y^x m_x/m ds) dy``, O(nx^2).

    Cross-check for ``solve_ux0``.  The inner integral of m_x/m is taken
    exactly as ``log m(x) - log m(y)``, the identity both routes rest on.
    """
    p, m0, chi = g.check_slice(p, "p"), g.check_slice(m0, "m0"), g.check_slice(chi, "chi")
    sign = _exponent_sign(formula)
    logm = np.log(np.maximum(m0, floor))
    v = np.zeros(g.nx)
    for i in range(1, g.nx):
        integrand = p[: i + 1] * np.exp(sign * (logm[i] - logm[: i + 1]))
        v[i] = trapezoid(integrand, dx=g.hx)
    return chi * v


def integrate_u0(ux0, u_left: float, g: Grid) -> np.ndarray:
    ux0 = g.check_slice(ux0, "ux0")
    return u_left + _cumtrapz(ux0, g)


def estimate_initial_value(
    m_weeks,
    params: MfgParams,
    g: Grid,
    eps: float = 0.2,
    mode: str = "standard",
    floor: float = DENSITY_FLOOR,
    formula: str = "standard",
) -> InitEstimate:
    """Run the full u(x, 0) estimate from the first three density slices."""
    if len(m_weeks) < 3:
        raise EstimateError(f"need three density slices, got {len(m_weeks)}")
    m0, m1, m2 = (g.check_slice(getattr(s, "values", s), f"week {k}") for k, s in enumerate(m_weeks[:3]))
    mt0 = dt_forward3(m0, m1, m2, g.ht, mode)
    mxx0 = d2x(m0, g)
    p0 = compute_p(m0, mt0, mxx0, params.beta, params.r, floor)
    chi = cutoff_chi(g, eps)
    ux0 = solve_ux0(p0, m0, chi, g, floor, formula)
    ux0[0] = 0.0
    # nodes 1 and nx-2 absorb the O(h^2) mismatch so the pinned u(., 0) slice is
    # discretely Neumann while u(-1, 0) stays exactly at the free parameter
    u0 = neumann_inner(integrate_u0(ux0, params.u_left, g))
    return InitEstimate(
        u0=u0,
        ux0=ux0,
        p0=p0,
        min_density=float(np.min(np.abs(m0))),
        stencil_mode=mode,
        floored_nodes=int(np.sum(m0 < floor)),
        extras={"mt0": mt0, "mxx0": mxx0, "mx0": d1x(m0, g), "chi": chi},
    )
