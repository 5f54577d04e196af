"""Normalized piston dynamics.

State ``(x1, x2)`` is the scaled wall position ``a/a0`` and the scaled wall
velocity ``T0 * adot / a0``; time is measured in ``T0 = sqrt(m / k0)``.
The equations of motion are::

    x1' = x2
    x2' = -u * x1,     -1 <= u <= 1

For a constant control the flow is linear and known in closed form, which is
what :func:`propagate_constant` and :func:`propagate_schedule` use. Arbitrary
time-dependent controls go through the fixed-step RK4 integrator
:func:`integrate_arbitrary`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

# below this |u| the flow coefficients are evaluated from their Taylor series
SMALL_U = 1e-12
DEFAULT_STEP = 1e-4


@dataclass(frozen=True)
class NormalizedState:
    x1: float
    x2: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError(f"non-finite state ({self.x1}, {self.x2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def distance(self, other: "NormalizedState") -> float:
        return math.hypot(self.x1 - other.x1, self.x2 - other.x2)


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant control as ``(duration, value)`` segments.

    ``boundary_jumps`` records that the physical stiffness is switched on from
    zero at ``t = 0`` and back to zero at ``t = T`` through instantaneous jumps.
    Those jumps take no time and are not stored as segments.
    """

    segments: tuple[tuple[float, float], ...]
    boundary_jumps: bool = True

    def __post_init__(self):
        segs = tuple((float(d), float(u)) for d, u in self.segments)
        for d, u in segs:
            if not d >= 0.0:
                raise ValueError(f"segment duration must be >= 0, got {d}")
            if not -1.0 <= u <= 1.0:
                raise ValueError(f"control value must lie in [-1, 1], got {u}")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    @property
    def switch_times(self) -> list[float]:
        """Times at which the control changes value (excluding 0 and T)."""
        times = []
        t = 0.0
        for (d, u), (_, u_next) in zip(self.segments, self.segments[1:]):
            t += d
            if u_next != u:
                times.append(t)
        return times

    def value_at(self, t: float) -> float:
        """Right-continuous control value; 0 outside ``[0, T)``."""
        if t < 0.0:
            return 0.0
        start = 0.0
        for d, u in self.segments:
            if start <= t < start + d:
                return u
            start += d
        return 0.0

    def merged(self, min_duration: float = 0.0) -> "ControlSchedule":
        """Drop segments no longer than ``min_duration`` and fuse equal neighbours."""
        out: list[list[float]] = []
        for d, u in self.segments:
            if d <= min_duration:
                continue
            if out and out[-1][1] == u:
                out[-1][0] += d
            else:
                out.append([d, u])
        return ControlSchedule(tuple((d, u) for d, u in out), self.boundary_jumps)


@dataclass(frozen=True)
class ExpansionPlan:
    gamma: float
    schedule: ControlSchedule
    switch_states: tuple[NormalizedState, ...] = ()
    method: str = "custom"

    @property
    def duration(self) -> float:
        return self.schedule.duration


@dataclass
class Trajectory:
    """Sampled trajectory; ``u[i]`` is the control acting right after ``t[i]``.

    When the state constraint ``x1 > 0`` is violated, sampling stops at the
    breach instant and ``breached`` / ``breach_time`` are set.
    """

    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    breached: bool = False
    breach_time: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> NormalizedState:
        return NormalizedState(float(self.x1[-1]), float(self.x2[-1]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x1", "x2", "u"])
            for row in zip(self.t, self.x1, self.x2, self.u):
                w.writerow([f"{v:.12g}" for v in row])


def _flow_coefficients(u: float, dt):
    """Return ``(C, S)`` with ``C = cos(sqrt(u) dt)`` and ``S = sin(sqrt(u) dt)/sqrt(u)``.

    Analytic continuation to ``u < 0`` gives cosh/sinh. ``dt`` may be an array.
    """
    if abs(u) < SMALL_U:
        dt2 = dt * dt
        c = 1.0 - u * dt2 / 2.0 + u * u * dt2 * dt2 / 24.0
        s = dt * (1.0 - u * dt2 / 6.0 + u * u * dt2 * dt2 / 120.0)
    elif u > 0.0:
        w = math.sqrt(u)
        c = np.cos(w * dt)
        s = np.sin(w * dt) / w
    else:
        w = math.sqrt(-u)
        c = np.cosh(w * dt)
        s = np.sinh(w * dt) / w
    return c, s


def flow(x1, x2, u: float, dt):
    """Exact constant-control flow; broadcasts over array arguments."""
    c, s = _flow_coefficients(u, dt)
    return c * x1 + s * x2, -u * s * x1 + c * x2


def breach_time(x1: float, x2: float, u: float) -> float:
    """Time until ``x1`` first reaches 0 under constant ``u`` starting from ``x1 > 0``.

    Returns ``inf`` when the constant-control orbit never leaves ``x1 > 0``.
    """
    if x1 <= 0.0:
        return 0.0
    if abs(u) < SMALL_U:
        return -x1 / x2 if x2 < 0.0 else math.inf
    if u > 0.0:
        w = math.sqrt(u)
        # x1(t) = R cos(w t - theta), theta in (-pi/2, pi/2)
        theta = math.atan2(x2 / w, x1)
        return (0.5 * math.pi + theta) / w
    w = math.sqrt(-u)
    if x2 >= 0.0 or x1 * w >= -x2:
        return math.inf
    return math.atanh(x1 * w / -x2) / w


def breach_times(x1: np.ndarray, x2: np.ndarray, u: float) -> np.ndarray:
    """Vectorized :func:`breach_time` for ``u`` in ``{-1, 0, +1}`` or general."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    out = np.full(np.broadcast(x1, x2).shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(u) < SMALL_U:
            out = np.where(x2 < 0.0, -x1 / x2, out)
        elif u > 0.0:
            w = math.sqrt(u)
            out = (0.5 * np.pi + np.arctan2(x2 / w, x1)) / w
        else:
            w = math.sqrt(-u)
            ratio = x1 * w / -x2
            hit = (x2 < 0.0) & (ratio < 1.0)
            out = np.where(hit, np.arctanh(np.where(hit, ratio, 0.0)) / w, out)
    return np.where(x1 <= 0.0, 0.0, out)


def propagate_constant(state: NormalizedState, u: float, dt: float) -> NormalizedState:
    """Exact state after holding control ``u`` for time ``dt``."""
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if not -1.0 <= u <= 1.0:
        raise ValueError(f"|u| must be <= 1, got {u}")
    x1, x2 = flow(state.x1, state.x2, u, dt)
    return NormalizedState(float(x1), float(x2))


def propagate_schedule(
    state: NormalizedState,
    schedule: ControlSchedule,
    sample_step: float | None = None,
) -> Trajectory:
    """Compose exact segment flows.

    Without ``sample_step`` the trajectory holds the segment end points only;
    with it, each segment is additionally sampled on a uniform grid no coarser
    than ``sample_step``.
    """
    ts, x1s, x2s, us = [0.0], [state.x1], [state.x2], []
    t = 0.0
    x1, x2 = state.x1, state.x2
    for d, u in schedule.segments:
        tb = breach_time(x1, x2, u)
        if tb <= d:
            if tb > 0.0:
                _append_samples(ts, x1s, x2s, us, t, x1, x2, u, tb, sample_step)
            us.append(0.0)
            return Trajectory(np.array(ts), np.array(x1s), np.array(x2s), np.array(us),
                              breached=True, breach_time=t + tb)
        if d > 0.0:
            _append_samples(ts, x1s, x2s, us, t, x1, x2, u, d, sample_step)
            t += d
            x1, x2 = x1s[-1], x2s[-1]
    us.append(0.0)
    return Trajectory(np.array(ts), np.array(x1s), np.array(x2s), np.array(us))


def _append_samples(ts, x1s, x2s, us, t0, x1, x2, u, d, sample_step):
    n = 1 if not sample_step else max(1, math.ceil(d / sample_step))
    tau = d * np.arange(1, n + 1) / n
    y1, y2 = flow(x1, x2, u, tau)
    us.extend([u] * n)
    ts.extend((t0 + tau).tolist())
    x1s.extend(np.atleast_1d(y1).tolist())
    x2s.extend(np.atleast_1d(y2).tolist())


def integrate_arbitrary(
    state: NormalizedState,
    u_of_t: Callable[[float], float],
    duration: float,
    dt_step: float = DEFAULT_STEP,
    record_every: int = 1,
) -> Trajectory:
    """Fixed-step classical RK4 for a time-dependent control.

    The step is shrunk slightly so that an integer number of steps covers
    ``duration`` exactly. Integration stops at the first step whose end point
    has ``x1 <= 0``.
    """
    if dt_step <= 0.0:
        raise ValueError(f"dt_step must be > 0, got {dt_step}")
    if duration < 0.0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    n = max(1, math.ceil(duration / dt_step - 1e-9)) if duration > 0 else 0
    h = duration / n if n else 0.0
    x1, x2 = state.x1, state.x2
    ts, x1s, x2s, us = [0.0], [x1], [x2], [u_of_t(0.0)]
    for k in range(n):
        t = k * h
        ua = u_of_t(t)
        um = u_of_t(t + 0.5 * h)
        ub = u_of_t(t + h)
        k1a, k1b = x2, -ua * x1
        k2a, k2b = x2 + 0.5 * h * k1b, -um * (x1 + 0.5 * h * k1a)
        k3a, k3b = x2 + 0.5 * h * k2b, -um * (x1 + 0.5 * h * k2a)
        k4a, k4b = x2 + h * k3b, -ub * (x1 + h * k3a)
        x1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        x2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        last = k == n - 1
        if x1 <= 0.0:
            ts.append((k + 1) * h)
            x1s.append(x1)
            x2s.append(x2)
            us.append(ub)
            return Trajectory(np.array(ts), np.array(x1s), np.array(x2s), np.array(us),
                              breached=True, breach_time=(k + 1) * h)
        if last or (k + 1) % record_every == 0:
            ts.append((k + 1) * h)
            x1s.append(x1)
            x2s.append(x2)
            us.append(ub)
    return Trajectory(np.array(ts), np.array(x1s), np.array(x2s), np.array(us))


def schedule_from_arcs(durations: Iterable[float], values: Sequence[float]) -> ControlSchedule:
    return ControlSchedule(tuple(zip(durations, values)))


# ---------------------------------------------------------------------------
# wall motions consumed by the quantum solver: ``wall(t) -> (a, adot, addot)``
# ---------------------------------------------------------------------------


class ScheduleWall:
    """Wall motion generated exactly by a piecewise-constant schedule from ``(1, 0)``."""

    def __init__(self, schedule: ControlSchedule, start: NormalizedState = NormalizedState(1.0, 0.0)):
        self.schedule = schedule
        self.duration = schedule.duration
        self._starts = [0.0]
        self._states = [start]
        for d, u in schedule.segments:
            self._states.append(propagate_constant(self._states[-1], u, d))
            self._starts.append(self._starts[-1] + d)

    def wall(self, t):
        scalar = np.ndim(t) == 0
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, self.duration)
        a = np.full(t.shape, self._states[-1].x1)
        adot = np.full(t.shape, self._states[-1].x2)
        addot = np.zeros(t.shape)
        for i, (d, u) in enumerate(self.schedule.segments):
            mask = (t >= self._starts[i]) & (t < self._starts[i] + d)
            if not np.any(mask):
                continue
            s = self._states[i]
            x1, x2 = flow(s.x1, s.x2, u, t[mask] - self._starts[i])
            a[mask] = x1
            adot[mask] = x2
            addot[mask] = -u * x1
        if scalar:
            return float(a[0]), float(adot[0]), float(addot[0])
        return a, adot, addot

    def control(self, t: float) -> float:
        return self.schedule.value_at(t)


class SampledWall:
    """Wall motion from a sampled trajectory and the control that produced it.

    ``a`` is interpolated by cubic Hermite splines using ``adot = x2``;
    ``addot`` follows from the equation of motion, ``-u(t) a``.
    """

    def __init__(self, trajectory: Trajectory, u_of_t: Callable[[float], float]):
        from scipy.interpolate import CubicHermiteSpline

        if trajectory.breached:
            raise ValueError("trajectory breaches x1 > 0")
        self._u = u_of_t
        self.duration = float(trajectory.t[-1])
        self._a = CubicHermiteSpline(trajectory.t, trajectory.x1, trajectory.x2)
        self._adot = self._a.derivative()

    def wall(self, t):
        tc = np.clip(t, 0.0, self.duration)
        a = self._a(tc)
        adot = self._adot(tc)
        if np.ndim(t) == 0:
            a, adot = float(a), float(adot)
            return a, adot, -self._u(float(tc)) * a
        u = np.array([self._u(float(s)) for s in np.ravel(tc)])
        return a, adot, -u * a

    def control(self, t: float) -> float:
        return self._u(t)


def ramped_control(schedule: ControlSchedule, delta: float) -> Callable[[float], float]:
    """Replace every jump of ``schedule`` by a linear ramp lasting ``delta``.

    Interior switches are ramped symmetrically about the switch time; the
    boundary jumps from and to zero are ramped inside ``[0, T]`` so the total
    duration is unchanged. ``delta = 0`` returns the bang control itself.
    """
    if delta < 0.0:
        raise ValueError("ramp duration must be >= 0")
    segs = [(d, u) for d, u in schedule.segments if d > 0.0]
    total = schedule.duration
    if delta == 0.0:
        return schedule.value_at
    knots_t = [0.0]
    knots_u = [0.0 if schedule.boundary_jumps else segs[0][1]]
    t = 0.0
    for i, (d, u) in enumerate(segs):
        start = t + (delta if i == 0 and schedule.boundary_jumps else delta / 2 if i else 0.0)
        t += d
        last = i == len(segs) - 1
        end = t - (delta if last and schedule.boundary_jumps else 0.0 if last else delta / 2)
        if end < start:
            raise ValueError(f"ramp duration {delta} too long for a segment of length {d}")
        knots_t += [start, end]
        knots_u += [u, u]
    knots_t.append(total)
    knots_u.append(0.0 if schedule.boundary_jumps else segs[-1][1])
    kt = np.array(knots_t)
    ku = np.array(knots_u)

    def u_of_t(s: float) -> float:
        if s < 0.0 or s > total:
            return 0.0
        return float(np.interp(s, kt, ku))

    return u_of_t
