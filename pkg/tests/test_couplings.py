import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from sapsim import couplings as cpl
from sapsim import potentials as pot

# frozen from the finite-difference double-well oracle below (n=4000, L=d/2+12)
SPLITTING_D15 = 5.672047e-01


def double_well_splitting(d, n=4000):
    """Independent oracle: lowest symmetric-antisymmetric splitting of the
    piecewise truncated harmonic double well, by FD diagonalization."""
    half_box = d / 2 + 12.0
    x = np.linspace(-half_box, half_box, n)
    dx = x[1] - x[0]
    v = 0.5 * np.minimum((x - d / 2) ** 2, (x + d / 2) ** 2)
    w = eigh_tridiagonal(
        1.0 / dx**2 + v, -0.5 / dx**2 * np.ones(n - 1),
        select="i", select_range=(0, 1),
    )[0]
    return w[1] - w[0]


def harmonic_pair_layout(d):
    return pot.TrapLayout(
        tuple(
            pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(c))
            for c in (-d / 2, d / 2)
        )
    )


class TestHarmonicTunnelingRate:
    def test_large_separation_limit(self):
        assert cpl.harmonic_tunneling_rate(30.0) < 1e-60

    def test_matches_double_well_splitting_oracle(self):
        assert double_well_splitting(1.5) == pytest.approx(SPLITTING_D15, abs=2e-5)
        j = cpl.harmonic_tunneling_rate(1.5)
        assert abs(j - SPLITTING_D15) / SPLITTING_D15 < 0.05

    def test_monotone_in_separated_regime(self):
        assert cpl.harmonic_tunneling_rate(3.0) > cpl.harmonic_tunneling_rate(6.0)
        d = np.linspace(1.5, 10.0, 80)
        assert np.all(np.diff(cpl.harmonic_tunneling_rate(d)) < 0)

    def test_rejects_nonpositive_separation(self):
        with pytest.raises(ValueError):
            cpl.harmonic_tunneling_rate(0.0)


class TestOverlapCouplings:
    def test_two_wells_match_closed_form_within_10pct(self):
        for d in (3.0, 4.5, 6.0, 8.0):
            layout = harmonic_pair_layout(d)
            x = np.linspace(-(d / 2 + 8), d / 2 + 8, 1024)
            _, rates = cpl.overlap_couplings(layout, 0.0, x)
            j_formula = cpl.harmonic_tunneling_rate(d)
            assert abs(rates[0, 0, 1] - j_formula) / j_formula < 0.10

    def test_error_decreases_with_separation(self):
        errs = []
        for d in (4.0, 5.0, 6.0, 7.0, 8.0):
            layout = harmonic_pair_layout(d)
            x = np.linspace(-(d / 2 + 8), d / 2 + 8, 1024)
            _, rates = cpl.overlap_couplings(layout, 0.0, x)
            j_formula = cpl.harmonic_tunneling_rate(d)
            errs.append(abs(rates[0, 0, 1] - j_formula) / j_formula)
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_single_trap_zero_point_energy(self):
        layout = pot.TrapLayout(
            (pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(0.0)),)
        )
        x = np.linspace(-10, 10, 512)
        onsite, _ = cpl.overlap_couplings(layout, 0.0, x)
        assert onsite[0, 0] == pytest.approx(0.5, abs=1e-9)

    def test_symmetric_triple_well_mirror(self):
        d = 2.5
        layout = pot.TrapLayout(
            tuple(
                pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(c))
                for c in (-d, 0.0, d)
            )
        )
        x = np.linspace(-d - 8, d + 8, 1024)
        _, rates = cpl.overlap_couplings(layout, 0.0, x)
        assert abs(rates[0, 0, 1] - rates[0, 1, 2]) < 1e-10

    def test_rate_matrix_symmetric(self):
        layout = pot.triple_harmonic_layout(9.0, 1.5, 600.0, 120.0)
        x = np.linspace(-16, 16, 1024)
        _, rates = cpl.overlap_couplings(layout, 200.0, x)
        assert np.array_equal(rates[0], rates[0].T)

    def test_orthonormalization_quality(self):
        d = 2.2
        layout = pot.TrapLayout(
            tuple(
                pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(c))
                for c in (-d, 0.0, d)
            )
        )
        x = np.linspace(-d - 8, d + 8, 1024)
        dx = x[1] - x[0]
        raw = np.array(
            [pot.asymptotic_eigenstate(trap, 0, x) for trap in layout.traps]
        )
        basis = cpl.symmetric_orthonormalize(raw, dx)
        gram = basis @ basis.T * dx
        assert np.max(np.abs(gram - np.eye(3))) < 1e-12
        seq = cpl.gram_schmidt(raw, dx)
        gram_seq = seq @ seq.T * dx
        assert np.max(np.abs(gram_seq - np.eye(3))) < 1e-12

    def test_merged_traps_raise_degenerate_error(self):
        layout = pot.TrapLayout(
            tuple(
                pot.TrapSpec("truncated-harmonic", pot.StaticTrajectory(c))
                for c in (0.0, 1e-9)
            )
        )
        x = np.linspace(-10, 10, 512)
        with pytest.raises(cpl.DegenerateLayoutError):
            cpl.overlap_couplings(layout, 0.0, x)

    def test_excited_level_rate_exceeds_ground(self):
        # level-dependent adiabaticity rests on J_n growing with n
        depth = 42.0
        d = 6.0
        layout = pot.TrapLayout(
            tuple(
                pot.TrapSpec(
                    "poschl-teller", pot.StaticTrajectory(c), depth=depth, width=1.0
                )
                for c in (-d / 2, d / 2)
            )
        )
        x = np.linspace(-(d / 2 + 10), d / 2 + 10, 1280)
        _, rates = cpl.overlap_couplings(layout, 0.0, x, levels=(0, 1, 2))
        j0, j1, j2 = rates[0, 0, 1], rates[1, 0, 1], rates[2, 0, 1]
        assert abs(j1) > abs(j0)
        assert abs(j2) > abs(j1)


class TestCouplingTable:
    def make_table(self):
        times = np.linspace(0.0, 10.0, 11)
        onsite = np.zeros((11, 3))
        onsite[:, 1] = 0.25
        rates = np.zeros((11, 3, 3))
        rates[:, 0, 1] = rates[:, 1, 0] = np.sin(times / 10 * np.pi) ** 2
        rates[:, 1, 2] = rates[:, 2, 1] = np.cos(times / 10 * np.pi) ** 2
        return cpl.CouplingTable(times=times, onsite=onsite, rates=rates)

    def test_interpolation(self):
        table = self.make_table()
        mid = table.rates_at(5.0)
        assert mid[0, 1] == pytest.approx(1.0)
        assert np.allclose(table.onsite_at(3.3), [0.0, 0.25, 0.0])

    def test_csv_roundtrip(self, tmp_path):
        table = self.make_table()
        path = tmp_path / "table.csv"
        table.to_csv(path)
        back = cpl.CouplingTable.from_csv(path)
        assert np.allclose(back.times, table.times)
        assert np.allclose(back.onsite, table.onsite)
        assert np.allclose(back.rates, table.rates)
        header = path.read_text().splitlines()[0]
        assert header == "t,omega_L,omega_M,omega_R,J_LM,J_MR,J_LR"

    def test_rejects_asymmetric_rates(self):
        times = np.array([0.0, 1.0])
        rates = np.zeros((2, 2, 2))
        rates[0, 0, 1] = 0.5
        with pytest.raises(ValueError):
            cpl.CouplingTable(times=times, onsite=np.zeros((2, 2)), rates=rates)

    def test_rejects_decreasing_times(self):
        with pytest.raises(ValueError):
            cpl.CouplingTable(
                times=np.array([0.0, 0.0]),
                onsite=np.zeros((2, 2)),
                rates=np.zeros((2, 2, 2)),
            )


class TestEvanescentLaw:
    def test_zero_separation(self):
        law = cpl.EvanescentLaw(omega0=2.0, decay_length=3.0)
        assert cpl.evanescent_coupling(law, 0.0) == pytest.approx(2.0)

    def test_one_decay_length(self):
        law = cpl.EvanescentLaw(omega0=2.0, decay_length=3.0)
        assert cpl.evanescent_coupling(law, 3.0) == pytest.approx(2.0 / np.e)

    def test_doubling_separation(self):
        law = cpl.EvanescentLaw(omega0=1.0, decay_length=1.0)
        ratio = cpl.evanescent_coupling(law, 1.0) / cpl.evanescent_coupling(law, 2.0)
        assert ratio == pytest.approx(np.e)

    def test_negative_separation_rejected(self):
        law = cpl.EvanescentLaw(omega0=1.0, decay_length=1.0)
        with pytest.raises(ValueError):
            cpl.evanescent_coupling(law, -0.1)
