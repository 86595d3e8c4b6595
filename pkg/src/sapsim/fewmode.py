"""Few-mode Hamiltonians for adiabatic passage: construction, spectra,
propagation, dark states, and the composite protocols built on them.

Mode Hamiltonians have the structure H(t) = diag(omega_i(t)) - J(t)/2 with a
Hermitian rate matrix J (zero diagonal); an optional mean-field term adds
g |a_i|^2 to the diagonal during propagation.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import linear_sum_assignment

from .couplings import CouplingTable
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, PropagationError, integrate_schrodinger

__all__ = [
    "FewModeSystem",
    "AmplitudeTrajectory",
    "SpectralFlow",
    "BlochState",
    "triple_well_system",
    "double_well_system",
    "triangle_system",
    "planar_four_level_system",
    "chain_system",
    "usb_system",
    "mrap_site_system",
    "bose_hubbard_system",
    "system_from_table",
    "build_system",
    "propagate",
    "eigen_flow",
    "dark_state_triple",
    "mixing_angles",
    "triangle_eigenvalues",
    "adiabaticity_bound",
    "bloch_map",
    "dark_variable",
    "chain_dark_state",
    "ChainDarkState",
    "usb_gate",
    "usb_gate_dynamic",
    "mrap_protocol",
    "MrapResult",
    "bec_transfer_map",
    "PropagationError",
]


def _constant(value):
    arr = np.asarray(value)

    def fn(t):
        return arr

    return fn


def _as_callable(value):
    return value if callable(value) else _constant(value)


@dataclass(frozen=True)
class FewModeSystem:
    """Time-dependent N-mode Hamiltonian H(t) = diag(onsite) - rates/2.

    onsite(t) -> (N,) real; rates(t) -> (N, N) Hermitian with zero diagonal.
    nonlinearity g adds g |a_i|^2 to the diagonal (mean-field interaction).
    """

    dim: int
    onsite: Callable[[float], np.ndarray]
    rates: Callable[[float], np.ndarray]
    nonlinearity: float = 0.0
    variant: str = "custom"
    labels: tuple = ()

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("need at least two modes")
        j0 = np.asarray(self.rates(0.0))
        if j0.shape != (self.dim, self.dim):
            raise ValueError("rates callback has the wrong shape")
        if np.max(np.abs(j0 - j0.conj().T)) > 1e-12:
            raise ValueError("rate matrix must be Hermitian")

    def hamiltonian(self, t: float, amplitudes=None) -> np.ndarray:
        h = np.diag(np.asarray(self.onsite(t), dtype=complex)) - np.asarray(
            self.rates(t), dtype=complex
        ) / 2.0
        if self.nonlinearity != 0.0 and amplitudes is not None:
            h = h + np.diag(self.nonlinearity * np.abs(amplitudes) ** 2)
        return h


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def triple_well_system(
    j_lm, j_mr, omega=(0.0, 0.0, 0.0), j_lr=0.0, nonlinearity: float = 0.0
) -> FewModeSystem:
    """Three resonating wells L, M, R with nearest-neighbor rates (and an
    optional direct L-R rate)."""
    j_lm, j_mr, j_lr = map(_as_callable, (j_lm, j_mr, j_lr))
    omega_fns = [_as_callable(w) for w in omega]

    def onsite(t):
        return np.array([float(np.real(f(t))) for f in omega_fns])

    def rates(t):
        a, b, c = complex(j_lm(t)), complex(j_mr(t)), complex(j_lr(t))
        return np.array(
            [[0, a, c], [np.conj(a), 0, b], [np.conj(c), np.conj(b), 0]]
        )

    return FewModeSystem(3, onsite, rates, nonlinearity, "triple-well",
                         ("L", "M", "R"))


def double_well_system(j, bias, nonlinearity: float = 0.0) -> FewModeSystem:
    """Two modes with rate J and energy bias omega = omega_R - omega_L."""
    j, bias = _as_callable(j), _as_callable(bias)

    def onsite(t):
        return np.array([0.0, float(bias(t))])

    def rates(t):
        val = complex(j(t))
        return np.array([[0, val], [np.conj(val), 0]])

    return FewModeSystem(2, onsite, rates, nonlinearity, "double-well", ("L", "R"))


def triangle_system(j_ab, j_bc, j_ac) -> FewModeSystem:
    """Three traps in a planar triangle, all pairs coupled, zero onsite."""
    j_ab, j_bc, j_ac = map(_as_callable, (j_ab, j_bc, j_ac))

    def onsite(t):
        return np.zeros(3)

    def rates(t):
        a, b, c = float(j_ab(t)), float(j_bc(t)), float(j_ac(t))
        return np.array([[0, a, c], [a, 0, b], [c, b, 0]])

    return FewModeSystem(3, onsite, rates, 0.0, "triangle", ("A", "B", "C"))


def planar_four_level_system(j_ab, j_bc, j_ac_10, j_ac_01) -> FewModeSystem:
    """Ground states of traps A, B plus the degenerate excited doublet of a
    wider trap C; the doublet axis "10" points along the B-C line, so only
    trap A couples to the "01" component."""
    j_ab, j_bc, j_ac_10, j_ac_01 = map(_as_callable, (j_ab, j_bc, j_ac_10, j_ac_01))

    def onsite(t):
        return np.zeros(4)

    def rates(t):
        ab, bc = float(j_ab(t)), float(j_bc(t))
        a10, a01 = float(j_ac_10(t)), float(j_ac_01(t))
        return np.array(
            [
                [0, ab, a10, a01],
                [ab, 0, bc, 0],
                [a10, bc, 0, 0],
                [a01, 0, 0, 0],
            ]
        )

    return FewModeSystem(4, onsite, rates, 0.0, "planar-four-level",
                         ("A", "B", "C10", "C01"))


def chain_system(rate_fns: Sequence, onsite=None) -> FewModeSystem:
    """Open chain with an odd number of sites 2n+1 and 2n bond rates."""
    n_bonds = len(rate_fns)
    dim = n_bonds + 1
    if dim % 2 == 0 or dim < 3:
        raise ValueError("chain needs an odd number of sites >= 3")
    fns = [_as_callable(f) for f in rate_fns]
    onsite_fns = None if onsite is None else [_as_callable(w) for w in onsite]

    def onsite_cb(t):
        if onsite_fns is None:
            return np.zeros(dim)
        return np.array([float(f(t)) for f in onsite_fns])

    def rates(t):
        out = np.zeros((dim, dim))
        for i, f in enumerate(fns):
            out[i, i + 1] = out[i + 1, i] = float(f(t))
        return out

    return FewModeSystem(dim, onsite_cb, rates, 0.0, "chain")


def usb_system(j1, j2, j3) -> FewModeSystem:
    """Four states: a shared top state |0> coupled to |1>, |2>, |3>."""
    j1, j2, j3 = map(_as_callable, (j1, j2, j3))

    def onsite(t):
        return np.zeros(4)

    def rates(t):
        a, b, c = float(j1(t)), float(j2(t)), float(j3(t))
        return np.array(
            [[0, a, b, c], [a, 0, 0, 0], [b, 0, 0, 0], [c, 0, 0, 0]]
        )

    return FewModeSystem(4, onsite, rates, 0.0, "usb", ("0", "1", "2", "3"))


def mrap_site_system(j_a, j_b) -> FewModeSystem:
    """Branched four-site graph: A and twin endpoints B1, B2 all coupled to a
    shared bus site C."""
    j_a, j_b = _as_callable(j_a), _as_callable(j_b)

    def onsite(t):
        return np.zeros(4)

    def rates(t):
        a, b = float(j_a(t)), float(j_b(t))
        return np.array(
            [[0, 0, 0, a], [0, 0, 0, b], [0, 0, 0, b], [a, b, b, 0]]
        )

    return FewModeSystem(4, onsite, rates, 0.0, "mrap-sites",
                         ("A", "B1", "B2", "C"))


def bose_hubbard_basis(n_particles: int) -> list[tuple[int, int, int]]:
    """Lexicographically ordered occupation tuples (n_L, n_M, n_R)."""
    return sorted(
        (nl, nm, n_particles - nl - nm)
        for nl in range(n_particles + 1)
        for nm in range(n_particles + 1 - nl)
    )


def bose_hubbard_system(
    n_particles: int, j_lm, j_mr, interaction: float = 0.0, omega=(0.0, 0.0, 0.0)
) -> FewModeSystem:
    """N bosons on a triple well in the fixed-number Fock sector.

    Hopping -J_ij/2 (a_i^dag a_j + h.c.) between neighboring wells, onsite
    interaction (U/2) n(n-1), and site energies omega_i. The single-particle
    sector reproduces the three-mode Hamiltonian.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    basis = bose_hubbard_basis(n_particles)
    index = {occ: i for i, occ in enumerate(basis)}
    dim = len(basis)
    j_lm, j_mr = _as_callable(j_lm), _as_callable(j_mr)
    omega = np.asarray(omega, dtype=float)

    diag = np.array(
        [
            omega @ np.array(occ)
            + 0.5 * interaction * sum(n * (n - 1) for n in occ)
            for occ in basis
        ]
    )

    def hop_matrix(i_from: int, i_to: int) -> np.ndarray:
        out = np.zeros((dim, dim))
        for occ in basis:
            if occ[i_from] == 0:
                continue
            target = list(occ)
            target[i_from] -= 1
            target[i_to] += 1
            amp = np.sqrt(occ[i_from] * (occ[i_to] + 1))
            row, col = index[tuple(target)], index[occ]
            out[row, col] += amp
        return out

    m_lm = hop_matrix(0, 1) + hop_matrix(1, 0)
    m_mr = hop_matrix(1, 2) + hop_matrix(2, 1)

    def onsite_cb(t):
        return diag

    def rates(t):
        return float(j_lm(t)) * m_lm + float(j_mr(t)) * m_mr

    labels = tuple("".join(map(str, occ)) for occ in basis)
    return FewModeSystem(dim, onsite_cb, rates, 0.0, "bose-hubbard", labels)


def system_from_table(table: CouplingTable, nonlinearity: float = 0.0,
                      variant: str = "table") -> FewModeSystem:
    """Mode system driven by linear interpolation of a sampled CouplingTable."""
    return FewModeSystem(
        table.n_modes, table.onsite_at, table.rates_at, nonlinearity, variant
    )


_BUILDERS = {
    "triple-well": triple_well_system,
    "double-well": double_well_system,
    "triangle": triangle_system,
    "planar-four-level": planar_four_level_system,
    "chain": chain_system,
    "usb": usb_system,
    "mrap-sites": mrap_site_system,
    "bose-hubbard": bose_hubbard_system,
}


def build_system(variant: str, **params) -> FewModeSystem:
    """Construct a mode system by variant name; see the individual builders."""
    try:
        builder = _BUILDERS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None
    return builder(**params)


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AmplitudeTrajectory:
    """Mode amplitudes along a propagation: times (nt,), amplitudes (nt, N)."""

    times: np.ndarray
    amplitudes: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    @property
    def final_amplitudes(self) -> np.ndarray:
        return self.amplitudes[-1]

    @property
    def final_populations(self) -> np.ndarray:
        return np.abs(self.amplitudes[-1]) ** 2

    def to_csv(self, path) -> None:
        n = self.amplitudes.shape[1]
        header = ["t"]
        for i in range(n):
            header += [f"re_a{i}", f"im_a{i}", f"pop{i}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for k, t in enumerate(self.times):
                row = [t]
                for i in range(n):
                    a = self.amplitudes[k, i]
                    row += [a.real, a.imag, abs(a) ** 2]
                writer.writerow(f"{val:.12e}" for val in row)


def propagate(
    system: FewModeSystem,
    a0,
    t_span: tuple[float, float],
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval=None,
    max_step: float = np.inf,
) -> AmplitudeTrajectory:
    """Integrate i da/dt = H(t) a from a0 over t_span.

    a0 must be normalized. Nonlinear systems re-evaluate the mean-field
    diagonal from the instantaneous amplitudes inside each solver stage.
    """
    a0 = np.asarray(a0, dtype=complex)
    if a0.shape != (system.dim,):
        raise ValueError(f"a0 must have shape ({system.dim},)")
    if abs(np.sum(np.abs(a0) ** 2) - 1.0) > 1e-9:
        raise ValueError("initial amplitudes must be normalized")
    times, states = integrate_schrodinger(
        system.hamiltonian, a0, t_span, rtol=rtol, atol=atol, t_eval=t_eval,
        max_step=max_step,
    )
    return AmplitudeTrajectory(times=times, amplitudes=states)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralFlow:
    """Continuity-ordered instantaneous spectrum along a parameter grid.

    eigenvalues[k] follows branch k across `times`; eigenvectors[s, :, k] is
    branch k at sample s, phase-fixed so consecutive overlaps are >= 0.
    """

    times: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    min_gaps: np.ndarray

    @property
    def min_gap(self) -> float:
        return float(np.min(self.min_gaps))

    def branch_gap(self, i: int, j: int) -> np.ndarray:
        return np.abs(self.eigenvalues[:, j] - self.eigenvalues[:, i])

    def to_csv(self, path) -> None:
        n = self.eigenvalues.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"lambda{i}" for i in range(n)] + ["min_gap"])
            for k, t in enumerate(self.times):
                row = [t] + list(self.eigenvalues[k]) + [self.min_gaps[k]]
                writer.writerow(f"{val:.12e}" for val in row)


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vec))
    ph = vec[idx]
    if ph != 0:
        vec = vec * (np.conj(ph) / abs(ph))
    return vec


def eigen_flow(system, time_grid, cross_check: bool = True) -> SpectralFlow:
    """Dense instantaneous diagonalization along `time_grid`.

    `system` may be a FewModeSystem or any callable t -> Hermitian matrix.
    Branches are reordered sample-to-sample by maximal eigenvector overlap
    and sign-fixed for nonnegative consecutive overlap. Triangle systems are
    cross-checked against the closed-form cubic eigenvalues.
    """
    ham = system.hamiltonian if isinstance(system, FewModeSystem) else system
    time_grid = np.asarray(time_grid, dtype=float)
    if np.any(np.diff(time_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    h0 = np.asarray(ham(time_grid[0]), dtype=complex)
    dim = h0.shape[0]
    values = np.empty((time_grid.size, dim))
    vectors = np.empty((time_grid.size, dim, dim), dtype=complex)
    gaps = np.empty(time_grid.size)

    prev = None
    for s, t in enumerate(time_grid):
        w, v = eigh(np.asarray(ham(t), dtype=complex))
        if prev is None:
            order = np.argsort(w)
            v = v[:, order]
            w = w[order]
            for k in range(dim):
                v[:, k] = _fix_phase(v[:, k])
        else:
            overlap = np.abs(prev.conj().T @ v)
            row, col = linear_sum_assignment(-overlap)
            order = np.empty(dim, dtype=int)
            order[row] = col
            v = v[:, order]
            w = w[order]
            for k in range(dim):
                inner = np.vdot(prev[:, k], v[:, k])
                if inner.real < 0:
                    v[:, k] = -v[:, k]
        values[s] = w
        vectors[s] = v
        sorted_w = np.sort(w)
        gaps[s] = np.min(np.diff(sorted_w)) if dim > 1 else np.inf
        prev = v

    if cross_check and getattr(system, "variant", None) == "triangle":
        for s, t in enumerate(time_grid[:: max(1, time_grid.size // 16)]):
            j = system.rates(t)
            analytic = np.sort(triangle_eigenvalues(j[0, 1], j[1, 2], j[0, 2]))
            numeric = np.sort(values[s * max(1, time_grid.size // 16)])
            if np.max(np.abs(analytic - numeric)) > 1e-8:
                raise RuntimeError("triangle cubic cross-check failed")

    return SpectralFlow(time_grid, values, vectors, gaps)


def triangle_eigenvalues(j_ab: float, j_bc: float, j_ac: float) -> np.ndarray:
    """Closed-form eigenvalues of the all-coupled three-mode Hamiltonian.

    Roots of E^3 + p E + q with p = -(J_AB^2 + J_BC^2 + J_AC^2)/4 and
    q = J_AB J_BC J_AC / 4, via the trigonometric form for three real roots.
    """
    p = -(j_ab**2 + j_bc**2 + j_ac**2) / 4.0
    q = j_ab * j_bc * j_ac / 4.0
    if p == 0.0:
        return np.zeros(3)
    amp = 2 * np.sqrt(-p / 3.0)
    arg = np.clip(3 * q / (2 * p) * np.sqrt(-3.0 / p), -1.0, 1.0)
    base = np.arccos(arg) / 3.0
    return np.array([amp * np.cos(base + 2 * np.pi * k / 3) for k in (1, 2, 3)])


def adiabaticity_bound(
    flow: SpectralFlow,
    followed_index: int,
    degeneracy_tol: float = 1e-12,
    coupling_tol: float = 1e-10,
) -> np.ndarray:
    """Worst-case excitation bound from the followed branch to each competitor.

    Central finite differences of the continuity-ordered eigenvectors give
    d/ds |Psi_i>; the bound for branch j is max_s |<Psi_j| d/ds |Psi_i> /
    (lambda_j - lambda_i)|^2. A sampled degeneracy with a nonvanishing
    coupling element reports an infinite bound. The followed branch's own
    entry is 0.
    """
    s = flow.times
    vecs = flow.eigenvectors
    vals = flow.eigenvalues
    n_s, dim = vals.shape
    if not 0 <= followed_index < dim:
        raise ValueError("followed_index out of range")

    dpsi = np.empty((n_s, dim), dtype=complex)
    psi_i = vecs[:, :, followed_index]
    dpsi[1:-1] = (psi_i[2:] - psi_i[:-2]) / (s[2:] - s[:-2])[:, None]
    dpsi[0] = (psi_i[1] - psi_i[0]) / (s[1] - s[0])
    dpsi[-1] = (psi_i[-1] - psi_i[-2]) / (s[-1] - s[-2])

    scale = max(np.max(np.abs(vals)), 1e-300)
    bounds = np.zeros(dim)
    for j in range(dim):
        if j == followed_index:
            continue
        coupling = np.abs(np.sum(vecs[:, :, j].conj() * dpsi, axis=1))
        gap = np.abs(vals[:, j] - vals[:, followed_index])
        degenerate = gap < degeneracy_tol * scale
        if np.any(degenerate & (coupling > coupling_tol)):
            bounds[j] = np.inf
            continue
        safe = ~degenerate
        if np.any(safe):
            bounds[j] = float(np.max((coupling[safe] / gap[safe]) ** 2))
    return bounds


# ---------------------------------------------------------------------------
# dark states and mixing angles
# ---------------------------------------------------------------------------

def dark_state_triple(j_lm: float, j_mr: float) -> np.ndarray:
    """Zero-energy eigenstate (cos T, 0, -sin T), tan T = J_LM / J_MR."""
    if j_lm == 0 and j_mr == 0:
        raise ValueError("at least one rate must be nonzero")
    theta = np.arctan2(j_lm, j_mr)
    return np.array([np.cos(theta), 0.0, -np.sin(theta)])


def mixing_angles(j_lm: float, j_mr: float, omega_m: float = 0.0) -> tuple[float, float]:
    """Mixing angles (Theta, phi) of the resonant triple well."""
    theta = np.arctan2(j_lm, j_mr)
    j2 = j_lm**2 + j_mr**2
    phi = np.arctan2(np.sqrt(j2), np.sqrt(j2 + omega_m**2) + omega_m)
    return float(theta), float(phi)


# ---------------------------------------------------------------------------
# two-mode Bloch picture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlochState:
    """Coherence/imbalance variables of a two-mode state."""

    u: float
    v: float
    w: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.u**2 + self.v**2 + self.w**2))


def bloch_map(a) -> BlochState:
    """Map two-mode amplitudes (a_L, a_R) to (U, V, W)."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (2,):
        raise ValueError("bloch_map expects two amplitudes")
    coh = a[0] * np.conj(a[1])
    return BlochState(
        u=float(2 * coh.real), v=float(2 * coh.imag),
        w=float(abs(a[1]) ** 2 - abs(a[0]) ** 2),
    )


def dark_variable(theta: float, state: BlochState) -> float:
    """Stationary combination W cos(theta) + U sin(theta)."""
    return state.w * np.cos(theta) + state.u * np.sin(theta)


def two_mode_mixing_angle(j: float, bias: float, g: float = 0.0,
                          w: float = 0.0) -> float:
    """tan(theta) = J / (omega + g W); the nonlinear case shifts the bias."""
    return float(np.arctan2(j, bias + g * w))


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainDarkState:
    """Exact odd-site zero mode of a 2n+1 chain plus its two-endpoint
    (straddling) approximation."""

    amplitudes: np.ndarray
    straddling: np.ndarray
    deviation: float


def chain_dark_state(rates: Sequence[float]) -> ChainDarkState:
    """Zero-energy chain eigenstate with support only on odd sites.

    For bond rates (J_1 .. J_2n) the unnormalized odd-site coefficients obey
    c_0 = prod_{i=1..n} J_{2i} and c_j = -(J_{2j-1} / J_{2j}) c_{j-1}. The
    straddling approximation keeps only the two end sites; its deviation from
    the exact state shrinks as 1/J_interior.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or rates.size % 2 != 0 or rates.size < 2:
        raise ValueError("need an even number (2n) of bond rates")
    n = rates.size // 2
    dim = rates.size + 1

    coeff = np.empty(n + 1)
    coeff[0] = np.prod(rates[1::2])
    for j in range(1, n + 1):
        if rates[2 * j - 1] == 0:
            # rebuild from the product form; a zero even bond shifts support
            coeff[j] = (-1) ** j * np.prod(rates[2 * j + 1 :: 2]) * np.prod(
                rates[0 : 2 * j : 2]
            )
        else:
            coeff[j] = -coeff[j - 1] * rates[2 * j - 2] / rates[2 * j - 1]

    norm = np.linalg.norm(coeff)
    if norm == 0:
        raise ValueError("all odd-site coefficients vanish for these rates")
    state = np.zeros(dim)
    state[::2] = coeff / norm

    ends = np.zeros(dim)
    ends[0] = rates[0]
    ends[-1] = (-1) ** n * rates[-1]
    ends /= np.linalg.norm(ends)
    # align the global sign with the exact state before measuring deviation
    if np.dot(ends, state) < 0:
        ends = -ends
    return ChainDarkState(
        amplitudes=state, straddling=ends,
        deviation=float(np.linalg.norm(state - ends)),
    )


# ---------------------------------------------------------------------------
# four-state geometric gate
# ---------------------------------------------------------------------------

def usb_gate(gamma: float) -> np.ndarray:
    """Analytic reflection gate on the qubit pair for rate ratio gamma."""
    if not np.isfinite(gamma):
        raise ValueError("gamma must be finite")
    denom = 1.0 + gamma**2
    return np.array(
        [[gamma**2 - 1, -2 * gamma], [-2 * gamma, 1 - gamma**2]]
    ) / denom


def usb_gate_dynamic(
    gamma: float,
    j_peak: float = 1.0,
    stage_time: float = 400.0,
    rtol: float = DEFAULT_RTOL,
) -> tuple[np.ndarray, float]:
    """Simulate the forward/backward four-state passage with a pi flip.

    Stage 1 ramps the shared coupling J3 down while the qubit pair couplings
    (fixed ratio gamma) ramp up; stage 2 mirrors the ramps with the sign of
    J3 reversed. Returns the realized 2x2 gate on the (|1>, |2>) subspace and
    the worst leakage probability out of it.
    """
    t_total = 2 * stage_time
    scale = j_peak / np.sqrt(1 + gamma**2)

    def j_pair(t):
        if t <= stage_time:
            return scale * np.sin(np.pi * t / (2 * stage_time)) ** 2
        return scale * np.cos(np.pi * (t - stage_time) / (2 * stage_time)) ** 2

    def j3(t):
        if t <= stage_time:
            return j_peak * np.cos(np.pi * t / (2 * stage_time)) ** 2
        return -j_peak * np.sin(np.pi * (t - stage_time) / (2 * stage_time)) ** 2

    system = usb_system(lambda t: j_pair(t), lambda t: gamma * j_pair(t), j3)
    gate = np.zeros((2, 2), dtype=complex)
    leakage = 0.0
    for col, basis_state in enumerate(((0, 1, 0, 0), (0, 0, 1, 0))):
        traj = propagate(system, np.array(basis_state, dtype=complex),
                         (0.0, t_total), rtol=rtol)
        final = traj.final_amplitudes
        gate[:, col] = final[1:3]
        leakage = max(leakage, float(abs(final[0]) ** 2 + abs(final[3]) ** 2))
    return gate, leakage


# ---------------------------------------------------------------------------
# operator-measurement protocol on the branched graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MrapResult:
    """Measurement branches after the forward/gate/backward sequence."""

    probability_at_a: float
    qubits_at_a: np.ndarray
    probability_elsewhere: float
    state_elsewhere: np.ndarray
    max_bus_population: float
    final_state: np.ndarray


def mrap_protocol(
    controlled_unitary: np.ndarray,
    psi1,
    psi2,
    j_peak: float = 1.0,
    stage_time: float = 400.0,
    rtol: float = DEFAULT_RTOL,
    n_checks: int = 64,
) -> MrapResult:
    """Transport-mediated operator measurement between two qubits.

    A particle on the branched site graph (A, B1, B2, bus C) is split by
    adiabatic passage into (|B1> + |B2>)/sqrt(2), a controlled unitary acts
    from each endpoint on its qubit, and the passage is reversed. Measuring
    the particle at A afterwards projects the qubits onto entangled states.

    controlled_unitary is the single-qubit gate applied when the particle is
    at the corresponding endpoint. Returns both measurement branches, their
    probabilities, and the largest transient bus population.
    """
    u = np.asarray(controlled_unitary, dtype=complex)
    if u.shape != (2, 2) or np.max(np.abs(u.conj().T @ u - np.eye(2))) > 1e-10:
        raise ValueError("controlled_unitary must be a 2x2 unitary")
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    for psi in (psi1, psi2):
        if psi.shape != (2,) or abs(np.linalg.norm(psi) - 1) > 1e-9:
            raise ValueError("qubit states must be normalized 2-vectors")

    def j_a(t):
        return j_peak * np.sin(np.pi * t / (2 * stage_time)) ** 2

    def j_b(t):
        return j_peak * np.cos(np.pi * t / (2 * stage_time)) ** 2

    sites_fwd = mrap_site_system(j_a, j_b)
    sites_bwd = mrap_site_system(
        lambda t: j_a(stage_time - t), lambda t: j_b(stage_time - t)
    )

    def composite(site_system):
        def ham(t, y=None):
            return np.kron(site_system.hamiltonian(t), np.eye(4))

        return ham

    # site basis (A, B1, B2, C) tensor qubit pair (4)
    state = np.kron(np.array([1, 0, 0, 0], dtype=complex), np.kron(psi1, psi2))

    t_eval = np.linspace(0, stage_time, n_checks)
    _, states = integrate_schrodinger(
        composite(sites_fwd), state, (0, stage_time), rtol=rtol, t_eval=t_eval
    )
    bus_pop = float(np.max(np.sum(np.abs(states[:, 12:16]) ** 2, axis=1)))
    state = states[-1]

    gates = np.eye(16, dtype=complex)
    blocks = [np.eye(4), np.kron(u, np.eye(2)), np.kron(np.eye(2), u), np.eye(4)]
    for site, block in enumerate(blocks):
        sl = slice(4 * site, 4 * site + 4)
        gates[sl, sl] = block
    state = gates @ state

    _, states = integrate_schrodinger(
        composite(sites_bwd), state, (0, stage_time), rtol=rtol, t_eval=t_eval
    )
    bus_pop = max(bus_pop, float(np.max(np.sum(np.abs(states[:, 12:16]) ** 2, axis=1))))
    state = states[-1]

    amp_a = state[0:4]
    p_a = float(np.sum(np.abs(amp_a) ** 2))
    qubits_a = amp_a / np.sqrt(p_a) if p_a > 1e-300 else amp_a
    rest = state.copy()
    rest[0:4] = 0.0
    p_rest = float(np.sum(np.abs(rest) ** 2))
    rest_state = rest / np.sqrt(p_rest) if p_rest > 1e-300 else rest
    return MrapResult(
        probability_at_a=p_a,
        qubits_at_a=qubits_a,
        probability_elsewhere=p_rest,
        state_elsewhere=rest_state,
        max_bus_population=bus_pop,
        final_state=state,
    )


# ---------------------------------------------------------------------------
# mean-field transfer map
# ---------------------------------------------------------------------------

def bec_transfer_map(
    deltas,
    interactions,
    j_peak: float = 1.0,
    t_max: float = 400.0,
    rtol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """Final right-well population of the mean-field triple well over a
    (bias, interaction) grid.

    The middle-well detuning Delta and self-interaction g enter the diagonal
    as (g|a_L|^2, Delta + g|a_M|^2, g|a_R|^2); the outer wells stay resonant.
    Returns (efficiency, favorable) where favorable marks the cells with
    g * Delta >= 0 and |g| < |Delta|.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    interactions = np.atleast_1d(np.asarray(interactions, dtype=float))
    eff = np.empty((interactions.size, deltas.size))

    def j_lm(t):
        return j_peak * np.sin(np.pi * t / (2 * t_max)) ** 2

    def j_mr(t):
        return j_peak * np.cos(np.pi * t / (2 * t_max)) ** 2

    a0 = np.array([1.0, 0.0, 0.0], dtype=complex)
    for gi, g in enumerate(interactions):
        for di, delta in enumerate(deltas):
            system = triple_well_system(
                j_lm, j_mr, omega=(0.0, delta, 0.0), nonlinearity=g
            )
            traj = propagate(system, a0, (0.0, t_max), rtol=rtol, atol=1e-12)
            eff[gi, di] = traj.final_populations[2]

    favorable = (
        (interactions[:, None] * deltas[None, :] >= 0)
        & (np.abs(interactions)[:, None] < np.abs(deltas)[None, :])
    )
    return eff, favorable
