"""Command-line front end.

Subcommands: ``plan``, ``sweep``, ``simulate``, ``otto``, ``certify``. Every
run writes plain CSV/JSON files into the output directory (``--out``, else
``$QPISTON_OUTDIR``, else ``./qpiston_out``). A ``--config`` file with
``key = value`` lines supplies defaults that command-line flags override.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible physics.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import (
    NormalizedState,
    SampledWall,
    ScheduleWall,
    integrate_arbitrary,
    propagate_schedule,
    ramped_control,
)
from .inverse import PolynomialPlan, control_extremum, min_feasible_duration, poly_control
from .optimal import NoFeasibleSchedule, brute_force_min_time, build_certificate, solve_optimal
from .quantum import (
    ModeExpansion,
    ResolutionWarning,
    cumulative_inverse_square,
    energy,
    evolve_pde,
    exact_state,
    fidelity,
    fidelity_physical,
    initial_state,
    mean_energy,
    populations,
)
from .thermo import OttoCycleSpec, cooling_rate, heat_extracted, max_cooling_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
OUTDIR_ENV = "QPISTON_OUTDIR"


class ConfigError(ValueError):
    pass


class InfeasiblePhysics(RuntimeError):
    pass


@dataclass(frozen=True)
class UnitSystem:
    """Conversion between normalized units (a0, T0 = sqrt(m/k0)) and physical ones."""

    mass: float = 1.0
    k0: float = 1.0
    a0: float = 1.0
    physical: bool = False

    def __post_init__(self):
        for name in ("mass", "k0", "a0"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be > 0")

    @property
    def t0(self) -> float:
        return math.sqrt(self.mass / self.k0)

    def time(self, t):
        return t * self.t0 if self.physical else t

    def length(self, x):
        return x * self.a0 if self.physical else x

    def rate(self, x):
        """Anything per unit time, e.g. cooling rates."""
        return x / self.t0 if self.physical else x

    def velocity(self, x2):
        return x2 * self.a0 / self.t0 if self.physical else x2

    def stiffness(self, u):
        return u * self.k0 if self.physical else u

    def time_to_normalized(self, t):
        return t / self.t0 if self.physical else t

    def length_to_normalized(self, x):
        return x / self.a0 if self.physical else x

    def labels(self) -> dict:
        if self.physical:
            return {"time": "physical", "length": "physical", "stiffness": "physical",
                    "T0": self.t0, "a0": self.a0, "k0": self.k0, "mass": self.mass}
        return {"time": "T0", "length": "a0", "stiffness": "k0", "T0": 1.0}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return f"{float(v):.12g}"


def write_table(outdir: Path, stem: str, columns: list[str], rows, fmt: str) -> Path:
    rows = [list(r) for r in rows]
    if fmt == "json":
        path = outdir / f"{stem}.json"
        data = {c: [float(r[i]) for r in rows] for i, c in enumerate(columns)}
        path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")
        return path
    path = outdir / f"{stem}.csv"
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(outdir: Path, stem: str, data: dict) -> Path:
    path = outdir / f"{stem}.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _check_gamma(gamma: float) -> None:
    if not (math.isfinite(gamma) and gamma > 1.0):
        raise ConfigError(f"--gamma must be > 1, got {gamma}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_plan(args, units: UnitSystem, outdir: Path) -> dict:
    gamma = args.gamma
    _check_gamma(gamma)
    step = args.sample_step
    if step <= 0.0:
        raise ConfigError("--sample-step must be > 0")
    summary = {"gamma": gamma, "method": args.method, "units": units.labels()}
    if args.method == "optimal":
        sol = solve_optimal(gamma)
        traj = propagate_schedule(NormalizedState(1.0, 0.0), sol.schedule(), sample_step=step)
        t, x1, x2, u = traj.t, traj.x1, traj.x2, traj.u
        # explicit boundary jumps from and to u = 0
        ctrl = [(0.0, 0.0)] + [(ti, ui) for ti, ui in zip(t[:-1], u[:-1])]
        ctrl += [(sol.t_x, -1.0), (sol.t_x, 1.0), (sol.total, 1.0), (sol.total, 0.0)]
        ctrl.sort(key=lambda r: r[0])
        summary.update(sol.to_dict())
        summary["endpoint"] = [float(x1[-1]), float(x2[-1])]
        total = sol.total
    else:
        total = min_feasible_duration(gamma)
        plan = PolynomialPlan(gamma, total)
        n = max(2, math.ceil(total / step)) + 1
        t = np.linspace(0.0, total, n)
        a, adot, _ = plan.wall(t)
        x1, x2 = a, adot
        u = poly_control(gamma, total, t / total)
        ctrl = list(zip(t, u))
        tau_star, m = control_extremum(gamma)
        summary.update({"total": total, "tau_at_bound": tau_star, "min_u": float(-m / total**2),
                        "endpoint": [float(x1[-1]), float(x2[-1])]})
    summary["total_physical"] = units.time(summary["total"])
    stem = f"plan_{args.method}"
    write_table(outdir, f"{stem}_control", ["t", "u"],
                [(units.time(ti), units.stiffness(ui)) for ti, ui in ctrl], args.format)
    write_table(outdir, f"{stem}_trajectory", ["t", "x1", "x2", "u"],
                [(units.time(a), units.length(b), units.velocity(c), units.stiffness(d))
                 for a, b, c, d in zip(t, x1, x2, u)], args.format)
    write_json(outdir, stem, summary)
    return summary


def _sweep_row(gamma: float) -> tuple[float, float, float]:
    return gamma, solve_optimal(gamma).total, min_feasible_duration(gamma)


def cmd_sweep(args, units: UnitSystem, outdir: Path) -> dict:
    lo, hi, n = args.gamma_min, args.gamma_max, args.points
    if n < 1 or not (1.0 < lo <= hi):
        raise ConfigError(f"empty or invalid gamma range [{lo}, {hi}] with {n} points")
    if n == 1:
        gammas = [lo]
    elif args.log:
        gammas = list(np.geomspace(lo, hi, n))
    else:
        gammas = list(np.linspace(lo, hi, n))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_row, gammas))
    else:
        rows = [_sweep_row(g) for g in gammas]
    write_table(outdir, "sweep", ["gamma", "T_optimal", "T_inverse"],
                [(g, units.time(a), units.time(b)) for g, a, b in rows], args.format)
    ordered = all(a < b for _, a, b in rows)
    summary = {"rows": len(rows), "optimal_below_inverse": ordered, "units": units.labels()}
    write_json(outdir, "sweep", summary)
    return summary


def _parse_modes(text: str) -> ModeExpansion:
    """``"1"`` or ``"1,2"`` (equal weights) or ``"1:0.8,2:0.6"``."""
    try:
        if ":" in text:
            pairs = [p.split(":") for p in text.split(",")]
            idx = [int(n) for n, _ in pairs]
            c = np.zeros(max(idx), dtype=complex)
            for (n, w) in pairs:
                c[int(n) - 1] = complex(w)
            return ModeExpansion.normalized(c)
        idx = [int(n) for n in text.split(",")]
        if min(idx) < 1:
            raise ValueError
        return ModeExpansion.equal(idx)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse --modes {text!r}") from exc


def run_simulation(gamma, method, ramp_delta, n_points, dt, modes, observe_every=100):
    """Evolve ``modes`` through the expansion; returns (summary, series, final, populations)."""
    if method == "optimal":
        sol = solve_optimal(gamma)
        ideal = ScheduleWall(sol.schedule())
        total = sol.total
        if ramp_delta > 0.0:
            u_ramp = ramped_control(sol.schedule(), ramp_delta)
            traj = integrate_arbitrary(NormalizedState(1.0, 0.0), u_ramp, total, min(dt, 1e-4))
            if traj.breached:
                raise InfeasiblePhysics("ramped control breaches x1 > 0")
            wall = SampledWall(traj, u_ramp)
        else:
            wall = ideal
    elif method == "inverse":
        if ramp_delta > 0.0:
            raise ConfigError("ramps apply to the bang-bang control only")
        ideal = wall = PolynomialPlan.fastest(gamma)
        total = ideal.duration
    else:
        raise ConfigError(f"unknown method {method!r}")
    steps = max(1, math.ceil(total / dt - 1e-9))
    h = total / steps
    times = h * np.arange(steps + 1)
    energies = energy(np.arange(1, modes.n_max + 1), 1.0)
    inv_a2 = cumulative_inverse_square(wall, times)
    inv_a2_ideal = cumulative_inverse_square(ideal, times) if wall is not ideal else inv_a2

    series = []

    def observe(state):
        k = int(round(state.t / h))
        ref = exact_state(modes, state.a, state.adot, energies * inv_a2[k], n_points, t=state.t)
        series.append((state.t, fidelity(state, ref)))

    psi0 = initial_state(modes, n_points)
    final = evolve_pde(psi0, wall, h, steps, observer=observe, observe_every=observe_every)
    a_end, adot_end, _ = ideal.wall(total)
    target = exact_state(modes, a_end, adot_end, energies * inv_a2_ideal[-1], n_points, t=total)
    pops0 = populations(psi0, max(modes.n_max, 8))
    pops = populations(final, max(modes.n_max, 8))
    summary = {
        "gamma": gamma,
        "method": method,
        "ramp_delta": ramp_delta,
        "grid_points": n_points,
        "dt": h,
        "steps": steps,
        "total": total,
        "final_wall": [final.a, final.adot],
        "fidelity_target": fidelity_physical(final, target),
        "fidelity_exact": series[-1][1],
        "norm_drift": abs(final.norm() - psi0.norm()),
        "energy_ratio": mean_energy(final) / mean_energy(psi0),
        "expected_energy_ratio": 1.0 / gamma**2,
        "max_population_change": float(np.max(np.abs(pops - pops0))),
    }
    return summary, series, final, (pops0, pops)


def cmd_simulate(args, units: UnitSystem, outdir: Path) -> dict:
    gamma = args.gamma
    _check_gamma(gamma)
    if args.grid < 8 or args.dt <= 0.0 or args.ramp_delta < 0.0 or args.observe_every < 1:
        raise ConfigError("need --grid >= 8, --dt > 0, --ramp-delta >= 0, --observe-every >= 1")
    modes = _parse_modes(args.modes)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ResolutionWarning)
        try:
            summary, series, final, (p0, p1) = run_simulation(
                gamma, args.method, args.ramp_delta, args.grid, args.dt, modes, args.observe_every
            )
        except ResolutionWarning as w:
            raise ConfigError(f"stability guard: {w}; suggested --dt {w.suggested_dt:.3g}") from w
    summary["units"] = units.labels()
    write_table(outdir, "simulate_fidelity", ["t", "F"],
                [(units.time(t), f) for t, f in series], args.format)
    write_table(outdir, "simulate_populations", ["n", "initial", "final"],
                [(n + 1, a, b) for n, (a, b) in enumerate(zip(p0, p1))], args.format)
    final.to_csv(outdir / "simulate_final_state.csv")
    write_json(outdir, "simulate", summary)
    return summary


def cmd_otto(args, units: UnitSystem, outdir: Path) -> dict:
    tau_h = args.tau_h
    tau_cs = args.tau_c
    for tc in tau_cs:
        if not 0.0 < tc < tau_h:
            raise ConfigError(f"need 0 < tau_c < tau_h, got tau_c={tc}, tau_h={tau_h}")
    results = []
    for tc in tau_cs:
        best = max_cooling_rate(tc, tau_h, model=args.model, gamma_max=args.gamma_max)
        results.append(best)
    write_table(outdir, "otto_bound", ["tau_c", "gamma_star", "R_star", "bound"],
                [(r.tau_c, r.gamma_star, units.rate(r.rate_star), r.bound) for r in results],
                args.format)
    tc = tau_cs[0]
    g_lo = math.sqrt(tau_h / tc)
    gammas = np.geomspace(g_lo, args.gamma_max, args.points)
    curve = []
    for g in gammas:
        spec = OttoCycleSpec(tc, tau_h, float(g))
        curve.append((g, heat_extracted(spec), units.rate(cooling_rate(spec, args.model))))
    write_table(outdir, "otto_curve", ["gamma", "Q", "R"], curve, args.format)
    summary = {
        "tau_h": tau_h,
        "model": args.model,
        "feasibility_threshold": g_lo,
        "results": [
            {"tau_c": r.tau_c, "gamma_star": r.gamma_star, "R_star": units.rate(r.rate_star),
             "bound": r.bound, "below_bound": r.below_bound}
            for r in results
        ],
        "units": units.labels(),
    }
    if args.gamma is not None:
        spec = OttoCycleSpec(tc, tau_h, args.gamma) if args.gamma > 1.0 else None
        if spec is None or heat_extracted(spec) <= 0.0:
            write_json(outdir, "otto", summary)
            raise InfeasiblePhysics(
                f"gamma = {args.gamma} extracts no heat (needs gamma > {g_lo:.6g})"
            )
        summary["operating_point"] = {
            "gamma": args.gamma,
            "Q": heat_extracted(spec),
            "R": units.rate(cooling_rate(spec, args.model)),
        }
    write_json(outdir, "otto", summary)
    return summary


def cmd_certify(args, units: UnitSystem, outdir: Path) -> dict:
    _check_gamma(args.gamma)
    sol = solve_optimal(args.gamma)
    cert = build_certificate(sol)
    data = sol.to_dict()
    data["certificate"] = cert.to_dict()
    ok = cert.passed
    if not args.skip_oracle:
        try:
            res = brute_force_min_time(args.gamma, args.max_switches, args.grid, args.tol)
        except NoFeasibleSchedule as exc:
            data["oracle"] = {"found": False, "reason": str(exc)}
        else:
            slack = args.grid + (sol.total - solve_optimal(max(args.gamma - args.tol, 1.0 + 1e-12)).total)
            data["oracle"] = {
                "found": True,
                "duration": res.duration,
                "segments": [list(s) for s in res.schedule.segments],
                "effective_switches": res.effective_switches,
                "endpoint_error": res.endpoint_error,
                "lower_limit": sol.total - slack,
                "consistent": res.duration >= sol.total - slack,
            }
            ok = ok and data["oracle"]["consistent"]
    data["units"] = units.labels()
    write_table(outdir, "certificate_adjoint", ["t", "lambda1", "lambda2", "phi", "H"],
                zip(cert.t[:: args.stride], cert.lam1[:: args.stride], cert.lam2[:: args.stride],
                    cert.phi[:: args.stride], cert.hamiltonian[:: args.stride]), args.format)
    write_json(outdir, "certify", data)
    if not ok:
        raise InfeasiblePhysics("certificate or oracle check failed")
    return data


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def read_config(path: str) -> dict:
    """``key = value`` per line; ``#`` starts a comment; keys use dashes or underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpiston", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key = value file with default option values")
    p.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or ./qpiston_out)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--units", choices=("normalized", "physical"), default="normalized")
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--k0", type=float, default=1.0)
    p.add_argument("--a0", type=float, default=1.0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("plan", help="control and trajectory samples for one expansion")
    s.add_argument("--gamma", type=float, default=10.0)
    s.add_argument("--method", choices=("optimal", "inverse"), default="optimal")
    s.add_argument("--sample-step", type=float, default=1e-3)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("sweep", help="expansion time versus gamma for both methods")
    s.add_argument("--gamma-min", type=float, default=1.1)
    s.add_argument("--gamma-max", type=float, default=10.0)
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--log", action="store_true", help="log-spaced gammas")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", help="Schroedinger evolution through the expansion")
    s.add_argument("--gamma", type=float, default=4.0)
    s.add_argument("--method", choices=("optimal", "inverse"), default="optimal")
    s.add_argument("--ramp-delta", type=float, default=0.0)
    s.add_argument("--grid", type=int, default=512)
    s.add_argument("--dt", type=float, default=1e-4)
    s.add_argument("--modes", default="1")
    s.add_argument("--observe-every", type=int, default=100)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("otto", help="Otto refrigerator cooling rate and third-law bound")
    s.add_argument("--tau-c", type=float, nargs="+", default=[1e-3])
    s.add_argument("--tau-h", type=float, default=1.0)
    s.add_argument("--model", choices=("optimal", "inverse"), default="optimal")
    s.add_argument("--gamma", type=float, default=None, help="also evaluate this operating point")
    s.add_argument("--gamma-max", type=float, default=1e6)
    s.add_argument("--points", type=int, default=200)
    s.set_defaults(func=cmd_otto)

    s = sub.add_parser("certify", help="maximum-principle certificate and brute-force oracle")
    s.add_argument("--gamma", type=float, default=10.0)
    s.add_argument("--max-switches", type=int, default=3)
    s.add_argument("--grid", type=float, default=1e-3)
    s.add_argument("--tol", type=float, default=1e-2)
    s.add_argument("--skip-oracle", action="store_true")
    s.add_argument("--stride", type=int, default=100, help="adjoint sample stride in the output")
    s.set_defaults(func=cmd_certify)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for target in [parser, *subparsers.choices.values()]:
        defaults = {}
        for action in target._actions:
            if action.dest in values:
                raw = values[action.dest]
                if action.nargs in ("+", "*"):
                    conv = [action.type(v) if action.type else v for v in raw.split()]
                elif isinstance(action, argparse._StoreTrueAction):
                    conv = raw.lower() in ("1", "true", "yes", "on")
                else:
                    conv = action.type(raw) if action.type else raw
                defaults[action.dest] = conv
        target.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        units = UnitSystem(args.mass, args.k0, args.a0, args.units == "physical")
        outdir = Path(args.out or os.environ.get(OUTDIR_ENV) or "qpiston_out")
        outdir.mkdir(parents=True, exist_ok=True)
        summary = args.func(args, units, outdir)
    except (ConfigError, OSError) as exc:
        print(f"qpiston: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    except InfeasiblePhysics as exc:
        print(f"qpiston: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(json.dumps(_headline(summary), sort_keys=True))
    return EXIT_OK


def _headline(summary: dict) -> dict:
    keys = ("gamma", "method", "total", "rows", "fidelity_target", "results", "certificate")
    return {k: summary[k] for k in keys if k in summary}


if __name__ == "__main__":
    sys.exit(main())
