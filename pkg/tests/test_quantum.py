import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qpiston.cli import run_simulation
from qpiston.dynamics import ScheduleWall
from qpiston.inverse import PolynomialPlan
from qpiston.optimal import solve_optimal
from qpiston.quantum import (
    ModeExpansion,
    ResolutionWarning,
    WaveFunction,
    cumulative_inverse_square,
    eigenstate,
    energy,
    evolve_pde,
    exact_state,
    fidelity,
    fidelity_physical,
    initial_state,
    mean_energy,
    phase_integrals,
    populations,
    stationary_state,
)

# |<Psi_1(a=1)|Psi_1(a=10)>|^2, frozen from scipy.integrate.quad
GROUND_OVERLAP_10 = 0.003948704047648522

# artifact-generated regression value: gamma = 10, ramp 0.05, N = 512, dt = 1e-4
RAMP_FIDELITY_10 = 0.94889183391542


class StaticWall:
    duration = 1.0

    def __init__(self, a=1.0):
        self.a = a

    def wall(self, t):
        if np.ndim(t) == 0:
            return self.a, 0.0, 0.0
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.a), np.zeros(t.shape), np.zeros(t.shape)


class CollapsingWall:
    duration = 2.0

    def wall(self, t):
        a = 1.0 - np.asarray(t, dtype=float)
        if np.ndim(t) == 0:
            return float(a), -1.0, 0.0
        return a, -np.ones_like(a), np.zeros_like(a)


def run(wall, modes, n_points, dt, stiffness=None):
    steps = math.ceil(wall.duration / dt)
    psi0 = initial_state(modes, n_points)
    final = evolve_pde(psi0, wall, wall.duration / steps, steps, stiffness=stiffness)
    theta = phase_integrals(wall, wall.duration, modes.n_max)
    a, adot, _ = wall.wall(wall.duration)
    return psi0, final, exact_state(modes, a, adot, theta, n_points, t=wall.duration)


class TestEigenstates:
    @pytest.mark.parametrize("a", [1.0, 2.0, 4.0])
    def test_orthonormal_on_grid(self, a):
        n_points = 512
        h = a / (n_points + 1)
        basis = np.array([eigenstate(n, a, n_points) for n in range(1, 6)])
        assert_allclose(h * basis @ basis.T, np.eye(5), atol=1e-12)

    @given(st.integers(1, 20), st.floats(0.5, 100.0))
    def test_energy_scales_inverse_square(self, n, gamma):
        assert energy(n, gamma) / energy(n, 1.0) == pytest.approx(1.0 / gamma**2, rel=1e-14)

    def test_energy_value(self):
        assert float(energy(2, 1.0)) == pytest.approx(2.0 * math.pi**2)

    @pytest.mark.parametrize("n,a", [(0, 1.0), (1, 0.0), (1, -1.0)])
    def test_rejects_bad_arguments(self, n, a):
        with pytest.raises(ValueError):
            eigenstate(n, a)

    def test_exact_state_is_scaled_eigenstate(self):
        psi = stationary_state(3, 2.5, 128)
        x, values = psi.physical()
        assert_allclose(values, eigenstate(3, 2.5, 128), atol=1e-13)
        assert psi.norm() == pytest.approx(1.0, abs=1e-13)

    def test_sine_coefficients_recover_modes(self):
        modes = ModeExpansion.normalized([0.6, 0.0, 0.8j])
        psi = exact_state(modes, 1.0, 0.0, np.zeros(3), 64)
        b = psi.sine_coefficients()
        assert_allclose(b[:3], modes.coefficients, atol=1e-13)
        assert_allclose(b[3:], 0.0, atol=1e-13)

    def test_mean_energy_converges(self):
        e = [mean_energy(stationary_state(2, 3.0, n)) for n in (64, 128)]
        exact = float(energy(2, 3.0))
        ratio = (exact - e[0]) / (exact - e[1])
        assert ratio == pytest.approx(4.0, rel=0.05)


class TestModeExpansion:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            ModeExpansion(np.array([1.0, 1.0]))

    def test_equal_superposition(self):
        m = ModeExpansion.equal([1, 3])
        assert_allclose(m.populations, [0.5, 0.0, 0.5])
        assert m.n_max == 3

    def test_immutable(self):
        m = ModeExpansion.single(2)
        with pytest.raises(ValueError):
            m.coefficients[0] = 1.0

    def test_wavefunction_immutable(self):
        psi = stationary_state(1, 1.0, 16)
        with pytest.raises(ValueError):
            psi.values[0] = 0.0
        with pytest.raises(AttributeError):
            psi.a = 2.0


class TestFidelity:
    def test_ground_states_of_different_boxes(self):
        f = fidelity_physical(stationary_state(1, 1.0), stationary_state(1, 10.0))
        assert f == pytest.approx(GROUND_OVERLAP_10, rel=1e-9)

    def test_analytic_overlap_formula(self):
        for g in (2.0, 4.0, 10.0):
            ov = 2 * g * g * math.sin(math.pi / g) / (math.pi * math.sqrt(g) * (g * g - 1))
            f = fidelity_physical(stationary_state(1, 1.0), stationary_state(1, g))
            assert f == pytest.approx(ov**2, rel=1e-9)

    def test_same_state(self):
        psi = exact_state(ModeExpansion.equal([1, 2]), 2.0, 0.3, [0.1, 0.7], 128)
        assert fidelity(psi, psi) == pytest.approx(1.0, abs=1e-13)
        assert fidelity(psi, psi) <= 1.0
        assert fidelity_physical(psi, psi) == pytest.approx(1.0, abs=1e-10)

    def test_orthogonal_states(self):
        assert fidelity(stationary_state(1, 1.0, 64), stationary_state(2, 1.0, 64)) < 1e-25

    def test_chirp_matters(self):
        a = exact_state(ModeExpansion.single(1), 2.0, 0.0, [0.0], 256)
        b = exact_state(ModeExpansion.single(1), 2.0, 1.0, [0.0], 256)
        assert fidelity(a, b) < 0.99

    @pytest.mark.parametrize(
        "other", [stationary_state(1, 1.0, 128), stationary_state(1, 2.0, 64)]
    )
    def test_grid_mismatch(self, other):
        with pytest.raises(ValueError, match="grid mismatch"):
            fidelity(stationary_state(1, 1.0, 64), other)


class TestEvolution:
    def test_static_box_phase(self):
        # discrete eigenvector: Cayley step multiplies it by a known phase
        n_points, dt, steps = 64, 1e-3, 500
        h = 1.0 / (n_points + 1)
        lam = 0.5 * (2.0 - 2.0 * math.cos(math.pi * h)) / h**2
        psi0 = initial_state(ModeExpansion.single(1), n_points)
        final = evolve_pde(psi0, StaticWall(), dt, steps)
        ov = h * np.vdot(psi0.values, final.values)
        assert abs(ov) == pytest.approx(1.0, abs=1e-12)
        assert np.angle(ov) == pytest.approx(
            np.angle(np.exp(-2j * steps * math.atan(0.5 * dt * lam))), abs=1e-10
        )

    def test_slaved_ground_state(self):
        wall = ScheduleWall(solve_optimal(4.0).schedule())
        psi0, final, ref = run(wall, ModeExpansion.single(1), 256, 1e-4)
        assert fidelity(final, ref) >= 0.9999
        assert fidelity_physical(final, stationary_state(1, 4.0, 256)) >= 0.9999
        assert final.norm() == pytest.approx(psi0.norm(), abs=1e-10)
        assert mean_energy(final) / mean_energy(psi0) == pytest.approx(1.0 / 16.0, rel=1e-4)

    @pytest.mark.parametrize("method", ["optimal", "inverse"])
    @pytest.mark.parametrize("gamma", [2.0, 10.0])
    def test_slaved_evolution_matches_exact_state(self, gamma, method):
        summary, series, _, _ = run_simulation(gamma, method, 0.0, 512, 1e-4,
                                               ModeExpansion.equal([1, 2]), observe_every=2000)
        assert min(f for _, f in series) >= 1.0 - 1e-4
        assert summary["norm_drift"] <= 1e-10 * max(1.0, summary["steps"] / 1e4)

    def test_inverse_plan_is_exact(self):
        wall = PolynomialPlan.fastest(10.0)
        _, final, ref = run(wall, ModeExpansion.single(1), 256, 2e-4)
        assert fidelity(final, ref) >= 1.0 - 1e-4

    def test_populations_preserved(self):
        modes = ModeExpansion.normalized([0.5, 0.5, 0.4, 0.3, 0.5])
        wall = ScheduleWall(solve_optimal(3.0).schedule())
        psi0, final, _ = run(wall, modes, 256, 1e-4)
        assert_allclose(populations(final, 8), populations(psi0, 8), atol=1e-4)
        assert_allclose(populations(psi0, 5), modes.populations, atol=1e-12)

    def test_spatial_convergence_is_second_order(self):
        wall = ScheduleWall(solve_optimal(4.0).schedule())
        modes = ModeExpansion.equal([1, 2])
        err = []
        for n_points in (32, 64):
            _, final, ref = run(wall, modes, n_points, 1e-4)
            err.append(math.sqrt(1.0 - fidelity(final, ref)))
        assert err[0] / err[1] == pytest.approx(4.0, rel=0.1)

    def test_detuned_stiffness_breaks_exactness(self):
        sol = solve_optimal(4.0)
        wall = ScheduleWall(sol.schedule())
        k = lambda t: 1.2 * sol.schedule().value_at(t)
        psi0, final, ref = run(wall, ModeExpansion.single(1), 128, 1e-4, stiffness=k)
        assert fidelity(final, ref) < 0.999
        assert final.norm() == pytest.approx(psi0.norm(), abs=1e-10)

    def test_explicit_slaved_stiffness_matches_default(self):
        sol = solve_optimal(2.0)
        wall = ScheduleWall(sol.schedule())
        _, f1, _ = run(wall, ModeExpansion.single(1), 64, 1e-3)
        _, f2, _ = run(wall, ModeExpansion.single(1), 64, 1e-3, stiffness=sol.schedule().value_at)
        assert_allclose(f1.values, f2.values, atol=1e-12)

    def test_resolution_guard(self):
        psi0 = initial_state(ModeExpansion.equal([1, 10]), 128)
        with pytest.warns(ResolutionWarning) as rec:
            evolve_pde(psi0, StaticWall(0.5), 0.01, 1)
        suggested = rec[0].message.suggested_dt
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            evolve_pde(psi0, StaticWall(0.5), suggested, 1)

    def test_rejects_collapsing_wall(self):
        with pytest.raises(ValueError, match="positive"):
            evolve_pde(initial_state(ModeExpansion.single(1), 32), CollapsingWall(), 1e-3, 2000)

    @pytest.mark.parametrize("dt,steps", [(0.0, 10), (-1e-3, 10), (1e-3, -1)])
    def test_rejects_bad_steps(self, dt, steps):
        with pytest.raises(ValueError):
            evolve_pde(initial_state(ModeExpansion.single(1), 32), StaticWall(), dt, steps)

    def test_observer_cadence(self):
        seen = []
        evolve_pde(initial_state(ModeExpansion.single(1), 32), StaticWall(), 1e-3, 10,
                   observer=lambda s: seen.append(s.t), observe_every=4)
        assert_allclose(seen, [0.0, 0.004, 0.008, 0.010])


class TestPhases:
    def test_static_wall_phases(self):
        theta = phase_integrals(StaticWall(2.0), 3.0, 3)
        assert_allclose(theta, energy(np.arange(1, 4), 2.0) * 3.0, rtol=1e-12)

    def test_cumulative_matches_total(self):
        wall = PolynomialPlan.fastest(4.0)
        times = np.linspace(0.0, wall.duration, 4001)
        cum = cumulative_inverse_square(wall, times)
        theta = phase_integrals(wall, wall.duration, 1)
        assert cum[-1] * energy(1, 1.0) == pytest.approx(theta[0], rel=1e-10)
        assert np.all(np.diff(cum) > 0)


def test_ramp_regression():
    summary, *_ = run_simulation(10.0, "optimal", 0.05, 512, 1e-4, ModeExpansion.single(1))
    assert summary["fidelity_target"] == pytest.approx(RAMP_FIDELITY_10, abs=1e-8)


def test_wavefunction_csv(tmp_path):
    psi = stationary_state(1, 1.0, 16)
    path = tmp_path / "psi.csv"
    psi.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "y,re_phi,im_phi,abs2"
    assert data.shape == (16, 4)
    assert_allclose(data[:, 3], np.abs(psi.values) ** 2, rtol=1e-11)


def test_wavefunction_defaults():
    psi = WaveFunction(np.ones(3))
    assert psi.h == 0.25
    assert_allclose(psi.y, [0.25, 0.5, 0.75])
