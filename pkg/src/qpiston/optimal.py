"""Minimum-time expansion: closed-form bang-bang synthesis and its checks.

The time-optimal control from ``(1, 0)`` to ``(gamma, 0)`` is ``u = -1`` for
``t_x`` followed by ``u = +1`` for ``t_y``. The switch point is where the
hyperbola ``x1^2 - x2^2 = 1`` meets the circle ``x1^2 + x2^2 = gamma^2``.

Two independent checks live here as well:

* :func:`build_certificate` integrates the adjoint system along a schedule
  and verifies the maximum-principle conditions.
* :func:`brute_force_min_time` searches multi-switch bang-bang schedules
  numerically without using the closed form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dynamics import (
    ControlSchedule,
    ExpansionPlan,
    NormalizedState,
    breach_times,
    flow,
    propagate_schedule,
)
from .inverse import min_feasible_duration

ADJOINT_STEP = 1e-5
H_TOL = 1e-6
PHI_EPS = 1e-9
SWITCH_TOL = 1e-6


@dataclass(frozen=True)
class OptimalSolution:
    gamma: float
    t_x: float
    t_y: float
    switch_state: NormalizedState

    @property
    def total(self) -> float:
        return self.t_x + self.t_y

    def schedule(self) -> ControlSchedule:
        return ControlSchedule(((self.t_x, -1.0), (self.t_y, 1.0)), boundary_jumps=True)

    def plan(self) -> ExpansionPlan:
        return ExpansionPlan(self.gamma, self.schedule(), (self.switch_state,), "optimal")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "t_x": self.t_x,
            "t_y": self.t_y,
            "total": self.total,
            "switch": [self.switch_state.x1, self.switch_state.x2],
        }


def solve_optimal(gamma: float) -> OptimalSolution:
    if not gamma > 1.0:
        raise ValueError(
            f"expansion factor must be > 1 (compression is not handled), got {gamma}"
        )
    # (gamma - 1)(gamma + 1) keeps precision for gamma close to 1
    half = (gamma - 1.0) * (gamma + 1.0) / 2.0
    s = math.sqrt(half)
    t_x = math.asinh(s)
    t_y = math.asin(min(1.0, s / gamma))
    switch = NormalizedState(math.sqrt(1.0 + half), s)
    return OptimalSolution(gamma, t_x, t_y, switch)


# ---------------------------------------------------------------------------
# maximum-principle certificate
# ---------------------------------------------------------------------------


@dataclass
class PMPCertificate:
    """Adjoint trajectory and maximum-principle diagnostics along a schedule.

    ``lambda0`` is fixed to -1; the adjoint ``(lambda1, lambda2)`` is the
    solution of ``lambda1' = u lambda2``, ``lambda2' = -lambda1`` for which the
    Hamiltonian vanishes at both ends.
    """

    gamma: float
    lambda0: float
    t: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    u: np.ndarray
    hamiltonian: np.ndarray
    phi_zero_times: list[float]
    max_abs_H: float
    endpoint_error: float
    failures: list[str] = field(default_factory=list)

    @property
    def phi(self) -> np.ndarray:
        return -self.lam2

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "max_abs_H": self.max_abs_H,
            "phi_zero_times": list(self.phi_zero_times),
            "endpoint_error": self.endpoint_error,
            "failures": list(self.failures),
        }


def _rk4_step_matrix(u: float, h: float) -> np.ndarray:
    b = np.array([[0.0, u], [-1.0, 0.0]]) * h
    b2 = b @ b
    return np.eye(2) + b + b2 / 2.0 + b2 @ b / 6.0 + b2 @ b2 / 24.0


def _matrix_powers(m: np.ndarray, n: int) -> np.ndarray:
    """``[m^0, m^1, ..., m^(n-1)]`` by repeated doubling."""
    out = np.empty((n, 2, 2))
    out[0] = np.eye(2)
    filled = 1
    step = m.copy()
    while filled < n:
        take = min(filled, n - filled)
        out[filled:filled + take] = step @ out[:take]
        filled += take
        step = step @ step
    return out


def build_certificate(
    solution: OptimalSolution,
    schedule: ControlSchedule | None = None,
    step: float = ADJOINT_STEP,
    h_tol: float = H_TOL,
    switch_tol: float = SWITCH_TOL,
    endpoint_tol: float = 1e-6,
) -> PMPCertificate:
    """Integrate the adjoint backward along ``schedule`` and check optimality.

    By default the schedule is the one synthesized by ``solution``; passing a
    different schedule checks that candidate against the same target
    ``(gamma, 0)``.

    The adjoint is integrated with classical RK4 (``step`` at most). Since it
    is linear, the terminal value enters through a propagator, and the two
    conditions ``H(0) = 0`` and ``H(T) = 0`` fix it uniquely. The certificate
    fails if ``max|H| > h_tol``, if ``u != sign(Phi)`` wherever
    ``|Phi| > 1e-9``, if the zeros of ``Phi`` do not match the switches of the
    schedule one-to-one, or if the schedule misses the target.
    """
    gamma = solution.gamma
    if schedule is None:
        schedule = solution.schedule()
    segs = [(d, u) for d, u in schedule.segments if d > 0.0]
    if not segs:
        raise ValueError("schedule has no positive-duration segment")

    # forward: sample times and states, segment by segment
    times, x1s, x2s, us, steps = [], [], [], [], []
    t0 = 0.0
    x1, x2 = 1.0, 0.0
    for d, u in segs:
        n = max(1, math.ceil(d / step - 1e-9))
        h = d / n
        tau = h * np.arange(n)
        y1, y2 = flow(x1, x2, u, tau)
        times.append(t0 + tau)
        x1s.append(np.atleast_1d(y1))
        x2s.append(np.atleast_1d(y2))
        us.append(np.full(n, u))
        steps.append((n, h, u))
        x1, x2 = (float(v) for v in flow(x1, x2, u, d))
        t0 += d
    t = np.concatenate(times + [[t0]])
    x1a = np.concatenate(x1s + [[x1]])
    x2a = np.concatenate(x2s + [[x2]])
    ua = np.concatenate(us + [[segs[-1][1]]])

    # backward: propagator P(t) with lambda(t) = P(t) @ lambda(T)
    props = []
    p_end = np.eye(2)
    for n, h, u in reversed(steps):
        back = _rk4_step_matrix(u, -h)
        powers = _matrix_powers(back, n + 1) @ p_end
        # powers[j] maps lambda(T) to lambda(segment_end - j h)
        props.append(powers[:0:-1])
        p_end = powers[-1]
    props = props[::-1]
    prop = np.concatenate(props + [np.eye(2)[None]], axis=0)

    lam0 = -1.0
    row_T = np.array([x2a[-1], -x1a[-1] * ua[-1]])
    row_0 = np.array([x2a[0], -x1a[0] * ua[0]]) @ prop[0]
    failures: list[str] = []
    try:
        lam_T = np.linalg.solve(np.vstack([row_T, row_0]), [-lam0, -lam0])
    except np.linalg.LinAlgError:
        lam_T = np.zeros(2)
        failures.append("boundary conditions H(0) = H(T) = 0 are degenerate")
    lam = prop @ lam_T
    lam1, lam2 = lam[:, 0], lam[:, 1]
    ham = lam0 + lam1 * x2a - lam2 * x1a * ua
    phi = -lam2

    max_h = float(np.max(np.abs(ham)))
    if max_h > h_tol:
        failures.append(f"max|H| = {max_h:.3e} exceeds {h_tol:.1e}")
    if np.min(np.hypot(lam1, lam2)) <= 1e-12:
        failures.append("adjoint vanishes")
    active = np.abs(phi) > PHI_EPS
    bad = active & (np.sign(phi) != np.sign(ua))
    if np.any(bad):
        first = float(t[np.argmax(bad)])
        arc = int(np.searchsorted(np.cumsum([d for d, _ in segs]), first, side="right"))
        failures.append(f"u != sign(Phi) on arc {arc + 1} (first at t = {first:.6g})")

    zeros = _zero_crossings(t, phi)
    switches = schedule.merged().switch_times
    if len(zeros) != len(switches):
        failures.append(
            f"Phi has {len(zeros)} zero(s) but the schedule has {len(switches)} switch(es)"
        )
    else:
        for z, s in zip(zeros, switches):
            if abs(z - s) > switch_tol:
                failures.append(f"Phi zero at {z:.9g} does not match switch at {s:.9g}")
    end_err = math.hypot(x1a[-1] - gamma, x2a[-1])
    if end_err > endpoint_tol * max(1.0, gamma):
        failures.append(f"endpoint misses (gamma, 0) by {end_err:.3e}")
    return PMPCertificate(
        gamma=gamma,
        lambda0=lam0,
        t=t,
        lam1=lam1,
        lam2=lam2,
        u=ua,
        hamiltonian=ham,
        phi_zero_times=zeros,
        max_abs_H=max_h,
        endpoint_error=end_err,
        failures=failures,
    )


def _zero_crossings(t: np.ndarray, f: np.ndarray) -> list[float]:
    """Sign changes of ``f`` located by linear interpolation; exact zeros kept once."""
    sgn = np.sign(f)
    nz = np.flatnonzero(sgn != 0)
    zeros: list[float] = []
    for i, j in zip(nz[:-1], nz[1:]):
        if sgn[i] == sgn[j]:
            continue
        if j > i + 1:
            zeros.append(float(t[i + 1]))
        else:
            zeros.append(float(t[i] - f[i] * (t[j] - t[i]) / (f[j] - f[i])))
    return zeros


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


class NoFeasibleSchedule(RuntimeError):
    pass


@dataclass
class OracleResult:
    gamma: float
    duration: float
    schedule: ControlSchedule
    endpoint_error: float
    pattern: tuple[float, ...]
    evaluated: int

    @property
    def effective_switches(self) -> int:
        return len(self.schedule.merged().switch_times)


ENUM_BUDGET = 2_000_000
N_SEEDS = 8
PENALTY = 10.0


def _landing(x1, x2, u: float, gamma: float):
    """Finish with control ``u`` until ``x2`` returns to zero with ``x1 > 0``.

    Returns ``(time, endpoint_error)``; invalid landings get ``nan`` time.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if u > 0:
            ok = (x1 > 0.0) & (x2 >= 0.0)
            t = np.arctan2(x2, x1)
            land = np.hypot(x1, x2)
        else:
            ok = (x1 > 0.0) & (x2 <= 0.0) & (-x2 < x1)
            t = np.arctanh(np.where(ok, -x2 / x1, 0.0))
            land = np.sqrt(np.where(ok, x1 * x1 - x2 * x2, 0.0))
    return np.where(ok, t, np.nan), np.where(ok, np.abs(land - gamma), np.inf)


def _patterns(controls: tuple[float, ...], max_switches: int):
    for n in range(1, max_switches + 2):
        for first in controls:
            if n > 1 and len(controls) < 2:
                continue
            other = [c for c in controls if c != first]
            pattern = [first]
            for _ in range(n - 1):
                pattern.append(other[0] if pattern[-1] == first else first)
            yield tuple(pattern)


def _enumerate(pattern, gamma, step, horizon):
    """All grid prefixes for the free arcs, with exact landing on the last arc."""
    k = len(pattern) - 1
    grid = step * np.arange(int(horizon / step) + 1)
    durs = np.zeros((1, 0))
    x1 = np.ones(1)
    x2 = np.zeros(1)
    elapsed = np.zeros(1)
    for u in pattern[:k]:
        tot = elapsed[:, None] + grid[None, :]
        keep = tot <= horizon
        rows, cols = np.nonzero(keep)
        d = grid[cols]
        y1, y2 = flow(x1[rows], x2[rows], u, d)
        alive = breach_times(x1[rows], x2[rows], u) > d
        rows, d, y1, y2 = rows[alive], d[alive], y1[alive], y2[alive]
        durs = np.column_stack([durs[rows], d])
        x1, x2, elapsed = y1, y2, elapsed[rows] + d
    t_last, err = _landing(x1, x2, pattern[-1], gamma)
    total = elapsed + t_last
    return durs, total, err


def _evaluate(prefix, pattern, gamma):
    """Exact total time and endpoint error for given free-arc durations."""
    x1, x2 = 1.0, 0.0
    t = 0.0
    for d, u in zip(prefix, pattern):
        if breach_times(x1, x2, u) <= d:
            return math.inf, math.inf
        x1, x2 = (float(v) for v in flow(x1, x2, u, d))
        t += d
    t_last, err = _landing(x1, x2, pattern[-1], gamma)
    t_last, err = float(t_last), float(err)
    if math.isnan(t_last):
        return math.inf, math.inf
    return t + t_last, err


def _lattice_polish(prefix, pattern, gamma, grid, tol):
    """Greedy descent over grid-aligned prefixes staying within ``tol``."""
    k = len(prefix)
    base = np.maximum(np.round(np.asarray(prefix) / grid), 0).astype(int)
    moves = [np.array(m) for m in itertools.product((-1, 0, 1), repeat=k) if any(m)]

    def score(idx):
        if np.any(idx < 0):
            return math.inf, math.inf
        return _evaluate(idx * grid, pattern, gamma)

    best_t, best_e = score(base)
    radius = 0
    # find a feasible lattice point near the continuous optimum
    while best_e > tol and radius < 4:
        radius += 1
        cands = []
        for m in itertools.product(range(-radius, radius + 1), repeat=k):
            idx = base + np.array(m, dtype=int)
            tt, ee = score(idx)
            if ee <= tol:
                cands.append((tt, ee, tuple(idx)))
        if cands:
            best_t, best_e, b = min(cands)
            base = np.array(b)
    if best_e > tol:
        return None
    improved = True
    while improved:
        improved = False
        for m in moves:
            tt, ee = score(base + m)
            if ee <= tol and tt < best_t - 1e-15:
                base, best_t, best_e, improved = base + m, tt, ee, True
                break
    return base * grid, best_t, best_e


def brute_force_min_time(
    gamma: float,
    max_switches: int = 3,
    duration_grid: float = 1e-3,
    endpoint_tol: float = 1e-2,
    controls: tuple[float, ...] = (-1.0, 1.0),
    horizon: float | None = None,
) -> OracleResult:
    """Numerical search over bang-bang schedules with at most ``max_switches`` switches.

    For each alternating pattern of arcs, the durations of all arcs but the
    last are enumerated on a uniform grid (as fine as ``duration_grid`` allows
    within a fixed evaluation budget) and the last arc runs until the velocity
    returns to zero. The best candidates are refined by Nelder-Mead on the
    free durations with an endpoint penalty, then snapped back to multiples of
    ``duration_grid`` by a greedy lattice search. A schedule is feasible when
    it keeps ``x1 > 0`` and ends within ``endpoint_tol`` of ``(gamma, 0)``.

    The default horizon is the duration of the inverse-engineered plan,
    which is itself feasible and therefore an upper bound on the optimum.
    """
    if not gamma > 1.0:
        raise ValueError(f"expansion factor must be > 1, got {gamma}")
    if duration_grid <= 0.0:
        raise ValueError("duration_grid must be > 0")
    if not 0 <= max_switches <= 3:
        raise ValueError("max_switches must be between 0 and 3")
    if horizon is None:
        horizon = min_feasible_duration(gamma) * 1.05
    controls = tuple(sorted(set(float(c) for c in controls)))
    if any(abs(c) != 1.0 for c in controls):
        raise ValueError("bang-bang controls must be -1 and/or +1")

    best = None
    evaluated = 0
    for pattern in _patterns(controls, max_switches):
        k = len(pattern) - 1
        if k == 0:
            t_last, err = _landing(1.0, 0.0, pattern[0], gamma)
            evaluated += 1
            if float(err) <= endpoint_tol:
                cand = (float(t_last), float(err), np.zeros(0), pattern)
                best = cand if best is None or cand[0] < best[0] else best
            continue
        n_per_dim = (ENUM_BUDGET * math.factorial(k)) ** (1.0 / k)
        step = max(duration_grid, horizon / n_per_dim)
        durs, total, err = _enumerate(pattern, gamma, step, horizon)
        evaluated += len(total)
        relax = max(endpoint_tol, 2.0 * (gamma + 1.0) * step)
        ok = np.flatnonzero(np.isfinite(total) & (err <= relax))
        if ok.size == 0:
            continue
        order = ok[np.argsort(total[ok], kind="stable")]
        seeds, seen = [], set()
        for i in order:
            key = tuple(np.round(durs[i] / (10 * step)).astype(int))
            if key in seen:
                continue
            seen.add(key)
            seeds.append(durs[i])
            if len(seeds) == N_SEEDS:
                break
        for seed in seeds:
            res = _refine(seed, pattern, gamma, endpoint_tol, step)
            if res is None:
                continue
            polished = _lattice_polish(res, pattern, gamma, duration_grid, endpoint_tol)
            if polished is None:
                continue
            prefix, tt, ee = polished
            if best is None or tt < best[0]:
                best = (tt, ee, prefix, pattern)

    if best is None:
        raise NoFeasibleSchedule(
            f"no bang-bang schedule within {endpoint_tol} of ({gamma}, 0) "
            f"on grid {duration_grid} (horizon {horizon:.4g})"
        )
    tt, ee, prefix, pattern = best
    t_last = tt - math.fsum(prefix)
    schedule = ControlSchedule(
        tuple(zip(list(prefix) + [max(t_last, 0.0)], pattern)), boundary_jumps=True
    )
    traj = propagate_schedule(NormalizedState(1.0, 0.0), schedule)
    if traj.breached:
        raise NoFeasibleSchedule("best candidate breaches x1 > 0 on re-propagation")
    end_err = traj.final.distance(NormalizedState(gamma, 0.0))
    return OracleResult(gamma, schedule.duration, schedule, end_err, pattern, evaluated)


def _refine(seed, pattern, gamma, tol, step):
    def objective(p):
        tt, ee = _evaluate(np.abs(p), pattern, gamma)
        if not math.isfinite(tt):
            return 1e6
        return tt + PENALTY * max(0.0, ee - tol)

    simplex = [np.asarray(seed, dtype=float)]
    for i in range(len(seed)):
        v = simplex[0].copy()
        v[i] += step
        simplex.append(v)
    res = minimize(
        objective,
        simplex[0],
        method="Nelder-Mead",
        options={"initial_simplex": np.array(simplex), "xatol": 1e-7, "fatol": 1e-10,
                 "maxiter": 4000},
    )
    p = np.abs(res.x)
    tt, ee = _evaluate(p, pattern, gamma)
    if not math.isfinite(tt):
        return None
    return p
