"""Particle in the expanding box, in units hbar = m = a0 = k0 = 1.

Wave functions are stored in the co-moving frame ``y = x / a(t)`` on the
``N`` interior points of a uniform grid over ``[0, 1]``. The physical wave
function is recovered as::

    psi(x, t) = a**-0.5 * exp(i adot x**2 / (2 a)) * phi(x / a, t)

With this gauge ``phi`` obeys a Schroedinger equation on the fixed unit box
with kinetic prefactor ``1 / (2 a**2)`` and residual potential
``W(y, t) = a**2 (k + addot / a) y**2 / 2``, which vanishes identically when
the auxiliary stiffness is slaved to the wall, ``k = -addot / a``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np
from scipy.fft import dst
from scipy.integrate import cumulative_simpson, simpson
from scipy.linalg import solve_banded
from scipy.special import roots_legendre

DEFAULT_POINTS = 512
DEFAULT_MODES = 32
GUARD = 0.1


class WallMotion(Protocol):
    duration: float

    def wall(self, t): ...


class ResolutionWarning(UserWarning):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


def energy(n, a):
    """Box eigenvalue ``n^2 pi^2 / (2 a^2)``."""
    return (np.asarray(n, dtype=float) * np.pi) ** 2 / (2.0 * np.asarray(a, dtype=float) ** 2)


def scaled_grid(n_points: int) -> np.ndarray:
    return np.arange(1, n_points + 1) / (n_points + 1.0)


def eigenstate(n: int, a: float, n_points: int = DEFAULT_POINTS) -> np.ndarray:
    """``sqrt(2/a) sin(n pi x / a)`` at the interior points ``x = a y``."""
    if n < 1:
        raise ValueError(f"mode index must be >= 1, got {n}")
    if a <= 0.0:
        raise ValueError(f"box width must be > 0, got {a}")
    x = a * scaled_grid(n_points)
    return math.sqrt(2.0 / a) * np.sin(n * np.pi * x / a)


@dataclass(frozen=True)
class ModeExpansion:
    """Coefficients ``c_n`` for ``n = 1 .. len(coefficients)``."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"coefficients must have unit norm, got {norm}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def normalized(cls, coefficients) -> "ModeExpansion":
        c = np.asarray(coefficients, dtype=complex)
        return cls(c / np.linalg.norm(c))

    @classmethod
    def single(cls, n: int = 1) -> "ModeExpansion":
        c = np.zeros(n, dtype=complex)
        c[n - 1] = 1.0
        return cls(c)

    @classmethod
    def equal(cls, modes) -> "ModeExpansion":
        modes = list(modes)
        c = np.zeros(max(modes), dtype=complex)
        c[np.array(modes) - 1] = 1.0
        return cls.normalized(c)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    @property
    def n_max(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class WaveFunction:
    """Co-moving amplitudes ``phi(y_j)`` plus the wall state they refer to."""

    values: np.ndarray
    t: float = 0.0
    a: float = 1.0
    adot: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_points(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points + 1.0)

    @property
    def y(self) -> np.ndarray:
        return scaled_grid(self.n_points)

    def norm(self) -> float:
        return float(self.h * np.sum(np.abs(self.values) ** 2))

    def chirped(self) -> np.ndarray:
        """``phi`` times the quadratic phase; overlaps at equal ``a`` use this."""
        return np.exp(0.5j * self.adot * self.a * self.y**2) * self.values

    def physical(self) -> tuple[np.ndarray, np.ndarray]:
        """``(x, psi(x))`` on the interior points of ``[0, a]``."""
        return self.a * self.y, self.chirped() / math.sqrt(self.a)

    def sine_coefficients(self) -> np.ndarray:
        """Exact expansion of the grid function in ``sqrt(2) sin(k pi y)``, k = 1..N."""
        return dst(self.values, type=1) * (self.h / math.sqrt(2.0))

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.y, self.values.real, self.values.imag, np.abs(self.values) ** 2])
        np.savetxt(path, rows, delimiter=",", header="y,re_phi,im_phi,abs2", comments="", fmt="%.12g")


def exact_state(
    modes: ModeExpansion,
    wall: float,
    wall_rate: float,
    phase_integrals,
    n_points: int = DEFAULT_POINTS,
    t: float = 0.0,
) -> WaveFunction:
    """Superposition of dressed eigenstates with accumulated dynamical phases.

    ``phase_integrals[n-1]`` is the time integral of ``E_n`` so far.
    """
    if wall <= 0.0:
        raise ValueError(f"box width must be > 0, got {wall}")
    y = scaled_grid(n_points)
    theta = np.asarray(phase_integrals, dtype=float)[: modes.n_max]
    n = np.arange(1, modes.n_max + 1)
    amps = modes.coefficients * np.exp(-1j * theta)
    phi = math.sqrt(2.0) * (np.sin(np.pi * np.outer(y, n)) @ amps)
    return WaveFunction(phi, t=t, a=wall, adot=wall_rate)


def stationary_state(n: int, a: float, n_points: int = DEFAULT_POINTS) -> WaveFunction:
    return exact_state(ModeExpansion.single(n), a, 0.0, np.zeros(n), n_points)


def phase_integrals(wall: WallMotion, t: float, n_modes: int, samples: int | None = None) -> np.ndarray:
    """``integral_0^t E_n dt'`` for ``n = 1..n_modes`` by Simpson's rule."""
    if t <= 0.0:
        return np.zeros(n_modes)
    if samples is None:
        samples = max(2001, 2 * math.ceil(t / 1e-4) + 1)
    ts = np.linspace(0.0, t, samples)
    a, _, _ = wall.wall(ts)
    inv_a2 = simpson(1.0 / np.asarray(a) ** 2, x=ts)
    return energy(np.arange(1, n_modes + 1), 1.0) * inv_a2


def cumulative_inverse_square(wall: WallMotion, times: np.ndarray) -> np.ndarray:
    """``integral_0^t a^-2 dt'`` at each of the uniformly spaced ``times`` (from 0)."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return np.zeros(times.size)
    a, _, _ = wall.wall(times)
    return cumulative_simpson(1.0 / np.asarray(a) ** 2, x=times, initial=0.0)


def fidelity(state_a: WaveFunction, state_b: WaveFunction) -> float:
    """``|<a|b>|^2`` for two states on the same grid and the same box width."""
    if state_a.n_points != state_b.n_points:
        raise ValueError(f"grid mismatch: {state_a.n_points} vs {state_b.n_points} points")
    if abs(state_a.a - state_b.a) > 1e-12 * max(state_a.a, state_b.a):
        raise ValueError(
            f"grid mismatch: box widths {state_a.a} and {state_b.a}; use fidelity_physical"
        )
    ov = state_a.h * np.vdot(state_a.chirped(), state_b.chirped())
    return min(1.0, float(abs(ov) ** 2))


def _evaluate_physical(state: WaveFunction, x: np.ndarray) -> np.ndarray:
    b = state.sine_coefficients()
    k = np.arange(1, b.size + 1)
    y = x / state.a
    phi = math.sqrt(2.0) * (np.sin(np.pi * np.outer(y, k)) @ b)
    return np.exp(0.5j * state.adot * x**2 / state.a) * phi / math.sqrt(state.a)


@lru_cache(maxsize=4)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_legendre(n)


def overlap_physical(state_a: WaveFunction, state_b: WaveFunction, quad_points: int = 4096) -> complex:
    """``<a|b>`` in the lab frame, for boxes of possibly different width.

    Each grid function is extended to the continuum through its exact sine
    series and the product is integrated by Gauss-Legendre quadrature over
    the common support ``[0, min(a_a, a_b)]``.
    """
    width = min(state_a.a, state_b.a)
    nodes, weights = _gauss_legendre(quad_points)
    x = 0.5 * width * (nodes + 1.0)
    w = 0.5 * width * weights
    return complex(np.sum(w * np.conj(_evaluate_physical(state_a, x)) * _evaluate_physical(state_b, x)))


def fidelity_physical(state_a: WaveFunction, state_b: WaveFunction, quad_points: int = 4096) -> float:
    return min(1.0, float(abs(overlap_physical(state_a, state_b, quad_points)) ** 2))


def populations(state: WaveFunction, n_modes: int = DEFAULT_MODES) -> np.ndarray:
    """Occupations ``|<Psi_n(a)|psi>|^2`` of the instantaneous box eigenstates."""
    n = np.arange(1, n_modes + 1)
    basis = math.sqrt(2.0) * np.sin(np.pi * np.outer(n, state.y))
    amps = state.h * (basis @ state.chirped())
    return np.abs(amps) ** 2


def mean_energy(state: WaveFunction) -> float:
    """Lab-frame kinetic energy ``<psi| -d^2/dx^2 / 2 |psi>`` (second-order FD)."""
    phi = np.concatenate([[0.0], state.values, [0.0]])
    h = state.h
    ymid = (np.arange(phi.size - 1) + 0.5) * h
    dphi = np.diff(phi) / h
    phimid = 0.5 * (phi[1:] + phi[:-1])
    grad = 1j * state.adot * ymid * phimid + dphi / state.a
    return float(0.5 * h * np.sum(np.abs(grad) ** 2))


def _effective_frequency(initial: WaveFunction, a_min: float, w_max: float) -> float:
    pops = np.abs(initial.sine_coefficients()) ** 2
    occupied = np.flatnonzero(pops > 1e-10)
    n_eff = occupied[-1] + 1 if occupied.size else 1
    return float(energy(n_eff, a_min)) + w_max


def evolve_pde(
    initial: WaveFunction,
    wall: WallMotion,
    dt: float,
    steps: int,
    stiffness: Callable[[float], float] | None = None,
    observer: Callable[[WaveFunction], None] | None = None,
    observe_every: int = 1,
) -> WaveFunction:
    """Crank-Nicolson (Cayley) propagation in the co-moving frame.

    Each step solves ``(1 + i dt H/2) phi' = (1 - i dt H/2) phi`` with ``H``
    evaluated at the step midpoint, so the scheme is unitary and second
    order in time. ``stiffness`` is the auxiliary ``k(t)``; when omitted it is
    slaved to the wall and the residual potential vanishes.

    ``observer`` is called with the initial state and then every
    ``observe_every`` steps (and at the end).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    n = initial.n_points
    h = initial.h
    y2 = initial.y**2
    t0 = initial.t
    mids = t0 + dt * (np.arange(steps) + 0.5)

    probe = np.linspace(t0, t0 + dt * steps, min(steps + 1, 2001))
    a_probe, _, add_probe = wall.wall(probe)
    a_probe = np.atleast_1d(a_probe)
    if np.any(a_probe <= 0.0):
        raise ValueError("wall position must stay positive over the horizon")
    w_max = 0.0
    if stiffness is not None:
        k_probe = np.array([stiffness(float(s)) for s in probe])
        w_max = float(np.max(np.abs(0.5 * a_probe**2 * (k_probe + np.atleast_1d(add_probe) / a_probe))))
    omega = _effective_frequency(initial, float(a_probe.min()), w_max)
    if dt * omega > GUARD:
        suggested = 0.9 * GUARD / omega
        warnings.warn(
            ResolutionWarning(
                f"dt = {dt:g} under-resolves the dynamics (dt * omega = {dt * omega:.3g} > {GUARD}); "
                f"use dt <= {suggested:.3g}",
                suggested,
            ),
            stacklevel=2,
        )

    phi = np.array(initial.values, dtype=complex)
    if observer is not None:
        observer(initial)
    ab = np.empty((3, n), dtype=complex)
    lap = np.empty(n, dtype=complex)
    for k, tm in enumerate(mids):
        a, _, addot = wall.wall(float(tm))
        if a <= 0.0:
            raise ValueError(f"wall position {a} <= 0 at t = {tm}")
        c = 1.0 / (2.0 * a * a * h * h)
        diag = np.full(n, 2.0 * c)
        if stiffness is not None:
            diag = diag + 0.5 * a * a * (stiffness(float(tm)) + addot / a) * y2
        # rhs = (1 - i dt H / 2) phi with H tridiagonal (off-diagonal -c)
        lap[:] = diag * phi
        lap[1:] -= c * phi[:-1]
        lap[:-1] -= c * phi[1:]
        rhs = phi - 0.5j * dt * lap
        ab[0, 1:] = 0.5j * dt * -c
        ab[1, :] = 1.0 + 0.5j * dt * diag
        ab[2, :-1] = 0.5j * dt * -c
        phi = solve_banded((1, 1), ab, rhs, check_finite=False)
        if observer is not None and ((k + 1) % observe_every == 0 or k == steps - 1):
            observer(_snapshot(phi, t0 + (k + 1) * dt, wall))
    return _snapshot(phi, t0 + steps * dt, wall)


def _snapshot(phi: np.ndarray, t: float, wall: WallMotion) -> WaveFunction:
    a, adot, _ = wall.wall(t)
    return WaveFunction(phi.copy(), t=t, a=float(a), adot=float(adot))


def initial_state(modes: ModeExpansion, n_points: int = DEFAULT_POINTS) -> WaveFunction:
    return exact_state(modes, 1.0, 0.0, np.zeros(modes.n_max), n_points)
