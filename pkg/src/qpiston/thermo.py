"""Quantum Otto refrigerator driven by the fast piston expansion.

Temperatures are energies (k_B = 1). The working medium carries internal
energy tau/2 after thermalizing at temperature tau. An expansion by gamma
preserves level populations and scales every energy by 1/gamma**2, so the
heat drawn from the cold bath per cycle is ``tau_c/2 - tau_h/(2 gamma**2)``.
The cycle time is taken to be the expansion time alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .inverse import min_feasible_duration
from .optimal import solve_optimal

GAMMA_MAX = 1e6
SEARCH_POINTS = 512


class InfeasibleCycle(ValueError):
    pass


@dataclass(frozen=True)
class OttoCycleSpec:
    tau_c: float
    tau_h: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.tau_c < self.tau_h:
            raise ValueError(f"need 0 < tau_c < tau_h, got {self.tau_c}, {self.tau_h}")
        if not self.gamma > 1.0:
            raise ValueError(f"expansion factor must be > 1, got {self.gamma}")

    @property
    def gamma_threshold(self) -> float:
        """Smallest expansion factor that still extracts heat."""
        return math.sqrt(self.tau_h / self.tau_c)

    @property
    def heat(self) -> float:
        return heat_extracted(self)

    @property
    def feasible(self) -> bool:
        return self.heat > 0.0


def heat_extracted(spec: OttoCycleSpec) -> float:
    return spec.tau_c / 2.0 - spec.tau_h / (2.0 * spec.gamma**2)


def expansion_time(gamma: float, model: str = "optimal") -> float:
    if model == "optimal":
        return solve_optimal(gamma).total
    if model == "inverse":
        return min_feasible_duration(gamma)
    raise ValueError(f"unknown expansion-time model {model!r}")


def cooling_rate(spec: OttoCycleSpec, expansion_time_model: str = "optimal") -> float:
    """Heat per cycle over the expansion time; 0 on the feasibility boundary."""
    q = heat_extracted(spec)
    if q < 0.0 and not math.isclose(spec.gamma, spec.gamma_threshold, rel_tol=1e-12):
        raise InfeasibleCycle(
            f"Q = {q:.6g} < 0: gamma = {spec.gamma} is below sqrt(tau_h/tau_c) = "
            f"{spec.gamma_threshold:.6g}"
        )
    if q <= 0.0:
        return 0.0
    return q / expansion_time(spec.gamma, expansion_time_model)


def third_law_bound(tau_c: float) -> float:
    """``-tau_c / ln(tau_c)``, meaningful for ``tau_c < 1``."""
    return -tau_c / math.log(tau_c)


@dataclass(frozen=True)
class RateOptimum:
    tau_c: float
    tau_h: float
    gamma_star: float
    rate_star: float
    model: str

    @property
    def bound(self) -> float:
        return third_law_bound(self.tau_c) if self.tau_c < 1.0 else math.inf

    @property
    def below_bound(self) -> bool:
        return self.rate_star < self.bound


def max_cooling_rate(
    tau_c: float,
    tau_h: float,
    model: str = "optimal",
    gamma_max: float = GAMMA_MAX,
    points: int = SEARCH_POINTS,
) -> RateOptimum:
    """Maximize the cooling rate over gamma in ``(sqrt(tau_h/tau_c), gamma_max]``.

    Log-spaced grid search followed by bounded Brent refinement in ``ln gamma``.
    """
    if not 0.0 < tau_c < tau_h:
        raise ValueError(f"need 0 < tau_c < tau_h, got {tau_c}, {tau_h}")
    g_lo = math.sqrt(tau_h / tau_c)
    if g_lo >= gamma_max:
        raise ValueError(f"feasible window ({g_lo:.4g}, {gamma_max:.4g}] is empty")

    def rate(log_g: float) -> float:
        return cooling_rate(OttoCycleSpec(tau_c, tau_h, math.exp(log_g)), model)

    grid = np.linspace(math.log(g_lo), math.log(gamma_max), points)[1:]
    vals = np.array([rate(s) for s in grid])
    i = int(np.argmax(vals))
    lo = grid[i - 1] if i > 0 else math.log(g_lo)
    hi = grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda s: -rate(s), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    if -res.fun >= vals[i]:
        log_star, r_star = float(res.x), float(-res.fun)
    else:
        log_star, r_star = float(grid[i]), float(vals[i])
    return RateOptimum(tau_c, tau_h, math.exp(log_star), r_star, model)
