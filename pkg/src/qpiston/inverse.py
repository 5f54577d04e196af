"""Inverse-engineered expansion with the quintic wall trajectory.

The wall follows ``a(tau)/a0 = 1 + (gamma - 1) * tau**3 * (6 tau**2 - 15 tau + 10)``
with ``tau = t / T``. That polynomial fixes ``a``, ``adot`` and ``addot`` at both
ends, so the slaved stiffness ``k = -m addot / a`` vanishes at ``t = 0`` and
``t = T``. In normalized units the control is ``u = k / k0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import NormalizedState

GRID_POINTS = 10_001
TAU_TOL = 1e-10


def _check_gamma(gamma: float) -> None:
    if not gamma > 1.0:
        raise ValueError(f"expansion factor must be > 1, got {gamma}")


def smoothstep(tau):
    """``tau^3 (6 tau^2 - 15 tau + 10)`` and its first two tau-derivatives."""
    tau = np.asarray(tau, dtype=float)
    p = tau**3 * (6.0 * tau**2 - 15.0 * tau + 10.0)
    dp = 30.0 * tau**2 * (tau - 1.0) ** 2
    ddp = 60.0 * tau * (2.0 * tau**2 - 3.0 * tau + 1.0)
    return p, dp, ddp


def _scaled_control(gamma: float, tau):
    """``u * (T/T0)**2``; independent of the duration."""
    p, _, ddp = smoothstep(tau)
    return -(gamma - 1.0) * ddp / (1.0 + (gamma - 1.0) * p)


def poly_control(gamma: float, duration: float, tau):
    """Normalized stiffness ``u(tau)`` of the inverse-engineered plan."""
    if duration <= 0.0:
        raise ValueError(f"duration must be > 0, got {duration}")
    u = _scaled_control(gamma, tau) / duration**2
    return float(u) if np.ndim(u) == 0 else u


def control_extremum(gamma: float) -> tuple[float, float]:
    """Locate ``max_tau |u(tau)| * (T/T0)**2``; returns ``(tau_star, M)``."""
    _check_gamma(gamma)
    tau = np.linspace(0.0, 1.0, GRID_POINTS)
    f = np.abs(_scaled_control(gamma, tau))
    i = int(np.argmax(f))
    lo = tau[max(i - 1, 0)]
    hi = tau[min(i + 1, GRID_POINTS - 1)]
    res = minimize_scalar(
        lambda s: -abs(float(_scaled_control(gamma, s))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": TAU_TOL},
    )
    if -res.fun >= f[i]:
        return float(res.x), float(-res.fun)
    return float(tau[i]), float(f[i])


def min_feasible_duration(gamma: float) -> float:
    """Shortest duration (in T0) keeping ``|u| <= 1`` along the whole plan.

    Because ``u`` scales as ``1/T**2`` this is ``sqrt(M(gamma))``.
    """
    _, m = control_extremum(gamma)
    return math.sqrt(m)


@dataclass(frozen=True)
class PolynomialPlan:
    gamma: float
    duration: float

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.duration <= 0.0:
            raise ValueError(f"duration must be > 0, got {self.duration}")

    @classmethod
    def fastest(cls, gamma: float) -> "PolynomialPlan":
        return cls(gamma, min_feasible_duration(gamma))

    def _tau(self, t):
        return np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)

    def wall(self, t):
        """``(a, adot, addot)`` in units of a0 and T0; held constant after T."""
        p, dp, ddp = smoothstep(self._tau(t))
        g1 = self.gamma - 1.0
        return 1.0 + g1 * p, g1 * dp / self.duration, g1 * ddp / self.duration**2

    def control(self, t):
        a, _, addot = self.wall(t)
        return -addot / a

    def state(self, t: float) -> NormalizedState:
        a, adot, _ = self.wall(t)
        return NormalizedState(float(a), float(adot))
