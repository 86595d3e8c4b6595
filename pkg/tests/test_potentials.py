import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from sapsim import potentials as pot


@pytest.fixture
def fig2_trajectories():
    return pot.sap_trajectories(d_max=9.0, d_min=1.5, tau=600.0, delay=120.0)


class TestEvaluatePotential:
    def test_single_harmonic_trap(self):
        layout = pot.TrapLayout(
            (pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(0.0)),)
        )
        assert pot.evaluate_potential(layout, np.array([2.0]), 0.0)[0] == pytest.approx(2.0)

    def test_two_traps_midpoint(self):
        d = 3.0
        layout = pot.TrapLayout(
            tuple(
                pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(c))
                for c in (-d / 2, d / 2)
            )
        )
        v = pot.evaluate_potential(layout, np.array([0.0]), 0.0)[0]
        assert v == pytest.approx(0.5 * (d / 2) ** 2)

    def test_transport_layout_middle_center(self, fig2_trajectories):
        layout = pot.triple_harmonic_layout(9.0, 1.5, 600.0, 120.0)
        assert pot.evaluate_potential(layout, np.array([0.0]), 0.0)[0] == pytest.approx(0.0)

    def test_dimensionality_mismatch_rejected(self):
        with pytest.raises(pot.PotentialError):
            pot.TrapLayout(
                (pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory((0.0, 0.0))),),
                dimensionality=1,
            )

    def test_min_composition_bounds_every_trap(self):
        layout = pot.triple_harmonic_layout(9.0, 1.5, 600.0, 120.0)
        x = np.linspace(-15, 15, 301)
        joint = layout.potential(x, 300.0)
        per_trap = []
        for trap in layout.traps:
            c = float(trap.trajectory.position(300.0))
            per_trap.append(trap.profile((x - c) ** 2))
        per_trap = np.array(per_trap)
        assert np.all(joint <= per_trap.min(axis=0) + 1e-14)
        assert np.allclose(joint, per_trap.min(axis=0))

    def test_continuity_in_x_and_t(self):
        layout = pot.triple_harmonic_layout(9.0, 1.5, 600.0, 120.0)
        for n in (512, 1024, 2048):
            x = np.linspace(-15, 15, n)
            v = layout.potential(x, 333.0)
            max_jump = np.max(np.abs(np.diff(v)))
            # jumps shrink linearly with spacing for a piecewise-smooth profile
            assert max_jump < 20 * (x[1] - x[0])
        t = np.linspace(0, 720, 400)
        v_t = np.array([layout.potential(np.array([1.0]), ti)[0] for ti in t])
        assert np.max(np.abs(np.diff(v_t))) < 0.2


class TestTrapPositions:
    def test_initial_positions(self, fig2_trajectories):
        assert np.allclose(pot.trap_positions(fig2_trajectories, 0.0), [-9.0, 0.0, 9.0])

    def test_right_trap_reaches_minimum(self, fig2_trajectories):
        _, _, right = fig2_trajectories
        assert right.position(300.0) == pytest.approx(1.5)

    def test_left_trap_constant_before_delay(self, fig2_trajectories):
        left, _, _ = fig2_trajectories
        for t in (0.0, 60.0, 120.0):
            assert left.position(t) == pytest.approx(-9.0)

    def test_outside_schedule_rejected(self, fig2_trajectories):
        with pytest.raises(pot.PotentialError):
            pot.trap_positions(fig2_trajectories, 721.0)
        with pytest.raises(pot.PotentialError):
            pot.trap_positions(fig2_trajectories, -1.0)

    def test_mirror_symmetry_of_pair(self, fig2_trajectories):
        # the right trap's approach replays as the left trap's, delayed and mirrored
        left, _, right = fig2_trajectories
        t = np.linspace(0.0, 600.0, 97)
        assert np.allclose(right.position(t), -left.position(t + 120.0), atol=1e-12)

    def test_hold_at_minimum_variant(self):
        traj = pot.Cos2ApproachTrajectory(9.0, 1.5, 600.0, return_to_max=False)
        assert traj.position(300.0) == pytest.approx(1.5)
        assert traj.position(500.0) == pytest.approx(1.5)

    def test_custom_samples_roundtrip(self, tmp_path):
        path = tmp_path / "traj.csv"
        path.write_text("t,x\n0.0,1.0\n1.0,2.0\n2.0,4.0\n")
        traj = pot.CustomSamplesTrajectory.from_csv(path)
        assert traj.position(0.5) == pytest.approx(1.5)
        assert traj.position(1.5) == pytest.approx(3.0)
        assert traj.kind == "custom-samples"


class TestAsymptoticEigenstate:
    def test_harmonic_ground_state_moments(self):
        x = np.linspace(-12, 12, 1024)
        dx = x[1] - x[0]
        trap = pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(0.0))
        phi = pot.asymptotic_eigenstate(trap, 0, x)
        assert np.sum(phi**2) * dx == pytest.approx(1.0, abs=1e-9)
        assert np.sum(x**2 * phi**2) * dx == pytest.approx(0.5, abs=1e-9)

    def test_harmonic_first_excited_is_odd(self):
        x = np.linspace(-12, 12, 1024)
        trap = pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(0.0))
        phi = pot.asymptotic_eigenstate(trap, 1, x)
        assert np.allclose(phi, -phi[::-1], atol=1e-12)
        assert abs(phi[len(x) // 2]) < 1e-10

    def test_poschl_teller_levels_match_analytic(self):
        # independent oracle: E_n = -(s - n)^2 / 2 with s(s+1) = 2 V0 w^2
        depth = 42.0
        s = 0.5 * (-1 + np.sqrt(1 + 8 * depth))
        n_bound = int(np.floor(s)) + 1
        analytic = np.array([-((s - n) ** 2) / 2 for n in range(n_bound)])

        x = np.linspace(-24, 24, 1536)
        trap = pot.TrapSpec(
            "poschl-teller", pot.StaticTrajectory(0.0), depth=depth, width=1.0
        )
        numeric = pot.single_well_energies(trap, x, n_bound)
        assert np.max(np.abs(numeric - analytic)) < 1e-6
        assert pot.bound_state_count(trap, x) == n_bound

    def test_poschl_teller_ground_state_matches_shooting(self):
        # cross-check the wavefunction route against a plain FD diagonalization
        depth = 42.0
        x = np.linspace(-20, 20, 2000)
        dx = x[1] - x[0]
        trap = pot.TrapSpec(
            "poschl-teller", pot.StaticTrajectory(0.0), depth=depth, width=1.0
        )
        phi = pot.asymptotic_eigenstate(trap, 0, x)
        v = -depth / np.cosh(x) ** 2
        w, vecs = eigh_tridiagonal(
            1.0 / dx**2 + v, -0.5 / dx**2 * np.ones(x.size - 1),
            select="i", select_range=(0, 0),
        )
        ref = vecs[:, 0] / np.sqrt(dx)
        if np.dot(ref, phi) < 0:
            ref = -ref
        assert np.max(np.abs(phi - ref)) < 1e-3

    def test_level_beyond_bound_spectrum_rejected(self):
        x = np.linspace(-20, 20, 768)
        trap = pot.TrapSpec(
            "poschl-teller", pot.StaticTrajectory(0.0), depth=1.0, width=1.0
        )
        with pytest.raises(pot.PotentialError):
            pot.asymptotic_eigenstate(trap, 5, x)


class TestPulseShapes:
    def test_sin_squared_starts_at_zero(self):
        shape = pot.PulseShape("sin-squared", amplitude=2.0, start=0.0, duration=10.0)
        assert pot.pulse_value(shape, 0.0) == pytest.approx(0.0)
        assert pot.pulse_value(shape, 5.0) == pytest.approx(2.0)

    def test_squared_sinusoid_endpoint(self):
        d = 0.7
        shape = pot.PulseShape("squared-sinusoid", amplitude=d, duration=40.0)
        assert pot.pulse_value(shape, 40.0) == pytest.approx(d)
        assert pot.pulse_value(shape, 0.0) == pytest.approx(0.0)

    def test_gaussian_peak(self):
        shape = pot.PulseShape("gaussian", amplitude=1.3, center=5.0, width=2.0)
        assert pot.pulse_value(shape, 5.0) == pytest.approx(1.3)

    def test_digital_piecewise_steps(self):
        shape = pot.PulseShape(
            "digital-piecewise", times=(0.0, 1.0, 2.0), values=(0.1, 0.5, 0.2)
        )
        assert pot.pulse_value(shape, 0.5) == pytest.approx(0.1)
        assert pot.pulse_value(shape, 1.0) == pytest.approx(0.5)
        assert pot.pulse_value(shape, 3.0) == pytest.approx(0.2)

    def test_error_function_is_monotone_step(self):
        shape = pot.PulseShape("error-function", amplitude=1.0, center=0.0, width=1.0)
        t = np.linspace(-5, 5, 101)
        vals = pot.pulse_value(shape, t)
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] < 1e-8 and vals[-1] > 1 - 1e-8


class TestValidation:
    def test_d_ordering_enforced(self):
        with pytest.raises(pot.PotentialError):
            pot.Cos2ApproachTrajectory(d_max=1.0, d_min=2.0, tau=10.0)

    def test_negative_depth_rejected(self):
        with pytest.raises(pot.PotentialError):
            pot.TrapSpec("gaussian", pot.StaticTrajectory(0.0), depth=-1.0, width=1.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(pot.PotentialError):
            pot.TrapSpec("quartic", pot.StaticTrajectory(0.0))
