"""Uniform space-time lattice on [-1, 1] x [0, T] with finite-difference stencils.

Fields are stored as ``(nx, nt)`` arrays: axis 0 is space (node 0 at x=-1),
axis 1 is time (node 0 at t=0).  Every numerical module shares the stencils
defined here so that discrete adjoints are exact matrix transposes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_NX = 5
MIN_NT = 4

STENCIL_MODES = ("standard", "as-printed")


class GridError(ValueError):
    """Raised on invalid grid sizes or mismatched field shapes."""


@dataclass(frozen=True)
class Grid:
    nx: int
    nt: int
    T: float

    @property
    def hx(self) -> float:
        return 2.0 / (self.nx - 1)

    @property
    def ht(self) -> float:
        return self.T / (self.nt - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nt)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.nx)

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt)

    @cached_property
    def wx(self) -> np.ndarray:
        """Trapezoid weights over [-1, 1]."""
        return trapezoid_weights(self.nx, self.hx)

    @cached_property
    def wt(self) -> np.ndarray:
        """Trapezoid weights over [0, T]."""
        return trapezoid_weights(self.nt, self.ht)

    @cached_property
    def Dx(self) -> np.ndarray:
        """First-derivative matrix in x (central interior, one-sided 2nd order at the ends)."""
        return first_derivative_matrix(self.nx, self.hx)

    @cached_property
    def Dxx(self) -> np.ndarray:
        """Second-derivative matrix in x with mirrored ghost nodes at x = +-1."""
        return neumann_laplacian_matrix(self.nx, self.hx)

    @cached_property
    def Dt(self) -> np.ndarray:
        """First-derivative matrix in t, same stencil family as ``Dx``."""
        return first_derivative_matrix(self.nt, self.ht)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, T)`` coordinate arrays of shape ``(nx, nt)``."""
        return np.meshgrid(self.x, self.t, indexing="ij")

    def check_field(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f

    def check_slice(self, f: np.ndarray, name: str = "slice") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.nx,):
            raise GridError(f"{name} has shape {f.shape}, grid expects ({self.nx},)")
        return f


def make_grid(nx: int, nt: int, T: float) -> Grid:
    if int(nx) != nx or nx < MIN_NX:
        raise GridError(f"nx must be an integer >= {MIN_NX}, got {nx}")
    if int(nt) != nt or nt < MIN_NT:
        raise GridError(f"nt must be an integer >= {MIN_NT}, got {nt}")
    if not np.isfinite(T) or T <= 0:
        raise GridError(f"T must be positive, got {T}")
    return Grid(int(nx), int(nt), float(T))


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def first_derivative_matrix(n: int, h: float) -> np.ndarray:
    D = np.zeros((n, n))
    i = np.arange(1, n - 1)
    D[i, i - 1] = -1.0
    D[i, i + 1] = 1.0
    D[0, :3] = (-3.0, 4.0, -1.0)
    D[-1, -3:] = (1.0, -4.0, 3.0)
    return D / (2.0 * h)


def neumann_laplacian_matrix(n: int, h: float) -> np.ndarray:
    D = np.zeros((n, n))
    i = np.arange(1, n - 1)
    D[i, i - 1] = 1.0
    D[i, i] = -2.0
    D[i, i + 1] = 1.0
    # ghost nodes f[-1] := f[1], f[n] := f[n-2]
    D[0, :2] = (-2.0, 2.0)
    D[-1, -2:] = (2.0, -2.0)
    return D / h**2


def _as_space_array(f: np.ndarray, g: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 0 or f.shape[0] != g.nx or f.ndim > 2 or (f.ndim == 2 and f.shape[1] != g.nt):
        raise GridError(f"shape {f.shape} does not match grid {g.shape}")
    return f


def d1x(f: np.ndarray, g: Grid) -> np.ndarray:
    """Spatial first derivative of a slice ``(nx,)`` or field ``(nx, nt)``."""
    return g.Dx @ _as_space_array(f, g)


def d2x(f: np.ndarray, g: Grid) -> np.ndarray:
    """Spatial second derivative with the discrete zero-Neumann closure."""
    return g.Dxx @ _as_space_array(f, g)


def d1t(f: np.ndarray, g: Grid) -> np.ndarray:
    """Time derivative of a field: central interior, one-sided second order at t=0, T."""
    return g.check_field(f) @ g.Dt.T


def dt_forward3(f0, f1, f2, ht: float, mode: str = "standard") -> np.ndarray:
    """Forward three-point estimate of the time derivative at the first slice.

    ``mode="as-printed"`` uses the coefficient -2 on the third slice as
    printed in the source derivation; it is not consistent (a constant input
    does not give zero) and exists only for reproduction studies.
    """
    f0, f1, f2 = (np.asarray(a, dtype=float) for a in (f0, f1, f2))
    if not (f0.shape == f1.shape == f2.shape):
        raise GridError(f"slice shapes differ: {f0.shape}, {f1.shape}, {f2.shape}")
    if mode == "standard":
        c2 = -1.0
    elif mode == "as-printed":
        c2 = -2.0
    else:
        raise ValueError(f"unknown stencil mode {mode!r}; expected one of {STENCIL_MODES}")
    return (-3.0 * f0 + 4.0 * f1 + c2 * f2) / (2.0 * ht)


def integrate_x(f: np.ndarray, g: Grid) -> float:
    f = g.check_slice(f)
    return float(g.wx @ f)


def integrate_xt(f: np.ndarray, w: np.ndarray | float, g: Grid) -> float:
    """Trapezoid in x, then trapezoid in t with per-time weights ``w``."""
    f = g.check_field(f)
    w = np.broadcast_to(np.asarray(w, dtype=float), (g.nt,))
    return float((g.wx @ f) @ (g.wt * w))


def neumann_defect(f: np.ndarray, g: Grid) -> np.ndarray:
    """One-sided first derivative at x=-1 and x=+1 (per time column for fields)."""
    f = _as_space_array(f, g)
    return np.stack([g.Dx[0] @ f, g.Dx[-1] @ f])


def neumann_edges(f: np.ndarray) -> np.ndarray:
    """Overwrite the edge nodes so the one-sided derivative at x=+-1 vanishes.

    Works along axis 0 on slices or fields and returns a new array.
    """
    f = np.array(f, dtype=float, copy=True)
    f[0] = (4.0 * f[1] - f[2]) / 3.0
    f[-1] = (4.0 * f[-2] - f[-3]) / 3.0
    return f


def neumann_inner(f: np.ndarray) -> np.ndarray:
    """Like ``neumann_edges`` but keeps the edge values and moves nodes 1 and nx-2.

    A convex combination of neighbours, so nonnegative input stays nonnegative.
    """
    f = np.array(f, dtype=float, copy=True)
    f[1] = (3.0 * f[0] + f[2]) / 4.0
    f[-2] = (3.0 * f[-1] + f[-3]) / 4.0
    return f
