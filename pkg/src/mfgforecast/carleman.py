"""Carleman weight function and the scalar factors of the convexified objective."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


MAX_LOG_WEIGHT = 700.0


class CarlemanError(ValueError):
    pass


@dataclass(frozen=True)
class CarlemanParams:
    lam: float = 1.0
    c: float = 3.0
    a: float = 1.1
    d: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        validate_c(self.c, self.T)
        if not self.lam >= 1.0:
            raise CarlemanError(f"lambda must be >= 1, got {self.lam}")
        if not self.a >= 0:
            raise CarlemanError(f"a must be nonnegative, got {self.a}")
        if not self.d > 0:
            raise CarlemanError(f"d must be positive, got {self.d}")


def validate_c(c: float, T: float) -> None:
    """Raise unless ``c > 2`` and ``c**2 / (T + c) >= 2``."""
    if not c > 2:
        raise CarlemanError(f"c must satisfy c > 2, got c={c}")
    if not T > 0:
        raise CarlemanError(f"T must be positive, got T={T}")
    ratio = c * c / (T + c)
    if not ratio >= 2:
        raise CarlemanError(f"c must satisfy c^2/(T+c) >= 2, got {ratio:.6g} for c={c}, T={T}")


def log_cwf(t, p: CarlemanParams):
    """Natural log of the weight, ``(T - t + c)**lam``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > p.T * (1 + 1e-12)):
        raise CarlemanError(f"t must lie in [0, {p.T}]")
    return (p.T - np.minimum(t, p.T) + p.c) ** p.lam


def cwf(t, p: CarlemanParams):
    """Carleman weight ``exp((T - t + c)**lam)``; decreasing in t."""
    out = np.exp(log_cwf(t, p))
    return float(out) if np.ndim(out) == 0 else out


def q_factor(p: CarlemanParams) -> float:
    return 1.0 / (p.lam * (p.T + p.c) ** (p.lam - 1.0))


def log_balance_scale(p: CarlemanParams) -> float:
    return -2.0 * p.a * p.c**p.lam


def balance_scale(p: CarlemanParams) -> float:
    return math.exp(log_balance_scale(p))


def residual_weights(t, p: CarlemanParams) -> np.ndarray:
    """Per-time weight ``balance_scale * cwf(t)**2``, combined in log space.

    The raw weight overflows double precision for lam >= 3, but the balanced
    product stays representable far longer.
    """
    expo = 2.0 * log_cwf(t, p) + log_balance_scale(p)
    if np.max(expo) > MAX_LOG_WEIGHT:
        raise CarlemanError(
            f"residual weight e^{np.max(expo):.1f} overflows double precision; "
            f"reduce lambda={p.lam} or T+c={p.T + p.c}, or raise a={p.a}"
        )
    return np.exp(expo)
