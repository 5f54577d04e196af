"""Minimum-time shortcuts to adiabaticity for a quantum piston."""

from .dynamics import (
    ControlSchedule,
    ExpansionPlan,
    NormalizedState,
    Trajectory,
    integrate_arbitrary,
    propagate_constant,
    propagate_schedule,
)
from .inverse import PolynomialPlan, min_feasible_duration, poly_control
from .optimal import (
    NoFeasibleSchedule,
    OptimalSolution,
    PMPCertificate,
    brute_force_min_time,
    build_certificate,
    solve_optimal,
)
from .thermo import OttoCycleSpec, cooling_rate, heat_extracted, max_cooling_rate

__version__ = "0.1.0"

__all__ = [
    "ControlSchedule",
    "ExpansionPlan",
    "NoFeasibleSchedule",
    "NormalizedState",
    "OptimalSolution",
    "OttoCycleSpec",
    "PMPCertificate",
    "PolynomialPlan",
    "Trajectory",
    "brute_force_min_time",
    "build_certificate",
    "cooling_rate",
    "heat_extracted",
    "integrate_arbitrary",
    "max_cooling_rate",
    "min_feasible_duration",
    "poly_control",
    "propagate_constant",
    "propagate_schedule",
    "solve_optimal",
]
