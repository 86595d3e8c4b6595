"""Tunneling rates and onsite energies for trap layouts, plus the evanescent
coupling law for waveguide pairs.

Couplings follow the sign convention of the mode Hamiltonians used throughout
this package: a positive rate J produces off-diagonal elements -J/2, so the
symmetric combination of two resonant wells is lowered and J equals the
symmetric-antisymmetric splitting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .potentials import TrapLayout, asymptotic_eigenstate

__all__ = [
    "harmonic_tunneling_rate",
    "EvanescentLaw",
    "evanescent_coupling",
    "gram_schmidt",
    "symmetric_orthonormalize",
    "overlap_couplings",
    "build_coupling_table",
    "CouplingTable",
    "DegenerateLayoutError",
]


class DegenerateLayoutError(ValueError):
    """The single-well states overlap too strongly to orthonormalize."""


def harmonic_tunneling_rate(d):
    """Ground-state tunneling rate J(d) of two piecewise truncated harmonic
    wells separated by d (in units of alpha; J in units of omega_x).

    Closed form in terms of the integral-form complementary error function
    E(x) = int_x^inf exp(-t^2) dt. Strictly decreasing for d beyond about one
    oscillator width; equals the splitting between the lowest symmetric and
    antisymmetric double-well eigenstates.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("separation must be > 0")
    e_int = np.sqrt(np.pi) / 2 * erfc(d / 2)
    num = -1.0 + np.exp(d**2 / 4) * (1.0 + d * np.sqrt(np.pi) * e_int / 2)
    den = np.sqrt(np.pi) * (np.exp(d**2 / 2) - 1.0) / d
    out = num / den
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EvanescentLaw:
    """Exponential distance law for evanescently coupled guides:
    Omega(d) = omega0 * exp(-d / decay_length)."""

    omega0: float
    decay_length: float

    def __post_init__(self):
        if self.omega0 <= 0 or self.decay_length <= 0:
            raise ValueError("omega0 and decay_length must be > 0")

    def coupling(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < 0):
            raise ValueError("separation must be >= 0")
        out = self.omega0 * np.exp(-d / self.decay_length)
        return out if out.ndim else float(out)


def evanescent_coupling(law: EvanescentLaw, d):
    """Omega(d) = Omega0 exp(-d / l) for separation(s) d."""
    return law.coupling(d)


# ---------------------------------------------------------------------------
# overlap-integral couplings
# ---------------------------------------------------------------------------

def gram_schmidt(states: np.ndarray, dx: float, tol: float = 1e-12) -> np.ndarray:
    """Orthonormalize rows of `states` in the given order (trapezoid weight dx).

    Raises DegenerateLayoutError when a state is (numerically) linearly
    dependent on the preceding ones, which happens when traps merge.
    """
    out = np.array(states, dtype=float, copy=True)
    for i in range(out.shape[0]):
        for j in range(i):
            out[i] -= (np.sum(out[j] * out[i]) * dx) * out[j]
        norm2 = np.sum(out[i] ** 2) * dx
        if norm2 < tol:
            raise DegenerateLayoutError(
                "single-well states are numerically dependent (traps merged?)"
            )
        out[i] /= np.sqrt(norm2)
    return out


def symmetric_orthonormalize(states: np.ndarray, dx: float,
                             tol: float = 1e-12) -> np.ndarray:
    """Orthonormalize rows of `states` with the inverse-square-root overlap.

    Treats all wells on an equal footing, so layout mirror symmetries carry
    over to the couplings exactly (sequential orthogonalization would push
    the overlap corrections onto the later states and break them). Raises
    DegenerateLayoutError when the overlap matrix is numerically singular.
    """
    states = np.asarray(states, dtype=float)
    overlap = states @ states.T * dx
    w, v = np.linalg.eigh(overlap)
    if np.min(w) < tol:
        raise DegenerateLayoutError(
            "single-well overlap matrix is numerically singular (traps merged?)"
        )
    inv_sqrt = v @ np.diag(w**-0.5) @ v.T
    return inv_sqrt @ states


def _apply_hamiltonian(psi: np.ndarray, v: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """H psi = -psi''/2 + V psi with a spectral second derivative."""
    kinetic = np.fft.ifft(k2 / 2 * np.fft.fft(psi)).real
    return kinetic + v * psi


def overlap_couplings(
    layout: TrapLayout,
    t: float,
    x: np.ndarray,
    levels: Sequence[int] = (0,),
) -> tuple[np.ndarray, np.ndarray]:
    """Onsite energies and tunneling rates from single-well eigenstates.

    For each vibrational level n in `levels`, the asymptotic eigenstates of
    every trap (taken left to right) are orthonormalized with the symmetric
    inverse-square-root overlap, and

        omega_i = <phi_i | H | phi_i>,   J_ij = -2 <phi_j | H | phi_i>,

    are evaluated by quadrature on the grid `x` against the full joint
    potential at time t. Returns (onsite, rates) with shapes
    (n_levels, n_traps) and (n_levels, n_traps, n_traps); rates are symmetric
    with zero diagonal.

    The grid should extend at least ~6 alpha beyond the outermost trap
    center, otherwise truncated tails bias the quadrature.
    """
    if layout.dimensionality != 1:
        raise ValueError("overlap couplings are defined for 1D layouts")
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    k2 = (2 * np.pi * np.fft.fftfreq(x.size, dx)) ** 2
    v = layout.potential(x, t)

    centers = layout.centers(t)
    order = np.argsort(centers)
    n_traps = len(layout.traps)
    onsite = np.zeros((len(levels), n_traps))
    rates = np.zeros((len(levels), n_traps, n_traps))

    for li, level in enumerate(levels):
        raw = np.empty((n_traps, x.size))
        for pos, trap_idx in enumerate(order):
            raw[pos] = asymptotic_eigenstate(layout.traps[trap_idx], level, x, t=t)
        basis = symmetric_orthonormalize(raw, dx)
        h_basis = np.array([_apply_hamiltonian(phi, v, k2) for phi in basis])
        h_mat = basis @ h_basis.T * dx
        h_mat = (h_mat + h_mat.T) / 2
        for pos, trap_idx in enumerate(order):
            onsite[li, trap_idx] = h_mat[pos, pos]
        for pi in range(n_traps):
            for pj in range(pi + 1, n_traps):
                j_val = -2.0 * h_mat[pi, pj]
                rates[li, order[pi], order[pj]] = j_val
                rates[li, order[pj], order[pi]] = j_val
    return onsite, rates


@dataclass(frozen=True)
class CouplingTable:
    """Sampled mode-Hamiltonian ingredients on a time grid.

    times: (nt,) strictly increasing; onsite: (nt, N); rates: (nt, N, N)
    symmetric with zero diagonal. Linear interpolation in t is used when the
    table drives a propagation.
    """

    times: np.ndarray
    onsite: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        onsite = np.asarray(self.onsite, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if onsite.shape != (times.size, rates.shape[1]):
            raise ValueError("onsite shape mismatch")
        if rates.shape != (times.size, onsite.shape[1], onsite.shape[1]):
            raise ValueError("rates shape mismatch")
        if not np.all(np.isfinite(onsite)) or not np.all(np.isfinite(rates)):
            raise ValueError("non-finite table entries")
        if np.max(np.abs(rates - np.swapaxes(rates, 1, 2))) > 0:
            raise ValueError("rates must be symmetric")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "onsite", onsite)
        object.__setattr__(self, "rates", rates)

    @property
    def n_modes(self) -> int:
        return self.onsite.shape[1]

    def onsite_at(self, t) -> np.ndarray:
        return np.array(
            [np.interp(t, self.times, self.onsite[:, i]) for i in range(self.n_modes)]
        )

    def rates_at(self, t) -> np.ndarray:
        n = self.n_modes
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = np.interp(t, self.times, self.rates[:, i, j])
        return out

    # -- CSV interchange (triple-well column layout) --

    _CSV_HEADER = ("t", "omega_L", "omega_M", "omega_R", "J_LM", "J_MR", "J_LR")

    def to_csv(self, path) -> None:
        """Write the three-mode table as CSV columns
        (t, omega_L, omega_M, omega_R, J_LM, J_MR, J_LR)."""
        if self.n_modes != 3:
            raise ValueError("CSV interchange layout is defined for 3 modes")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self._CSV_HEADER)
            for k, t in enumerate(self.times):
                row = [
                    t,
                    self.onsite[k, 0],
                    self.onsite[k, 1],
                    self.onsite[k, 2],
                    self.rates[k, 0, 1],
                    self.rates[k, 1, 2],
                    self.rates[k, 0, 2],
                ]
                writer.writerow(f"{val:.12e}" for val in row)

    @classmethod
    def from_csv(cls, path) -> "CouplingTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        data = np.atleast_2d(data)
        if data.shape[1] != 7:
            raise ValueError("expected 7 columns (t, omega_i x3, J_ij x3)")
        nt = data.shape[0]
        rates = np.zeros((nt, 3, 3))
        rates[:, 0, 1] = rates[:, 1, 0] = data[:, 4]
        rates[:, 1, 2] = rates[:, 2, 1] = data[:, 5]
        rates[:, 0, 2] = rates[:, 2, 0] = data[:, 6]
        return cls(times=data[:, 0], onsite=data[:, 1:4], rates=rates)


def build_coupling_table(
    layout: TrapLayout,
    times: np.ndarray,
    x: np.ndarray,
    level: int = 0,
) -> CouplingTable:
    """Sample overlap_couplings over `times` for one vibrational level."""
    times = np.asarray(times, dtype=float)
    onsite = np.empty((times.size, len(layout.traps)))
    rates = np.empty((times.size, len(layout.traps), len(layout.traps)))
    for k, t in enumerate(times):
        o, r = overlap_couplings(layout, t, x, levels=(level,))
        onsite[k] = o[0]
        rates[k] = r[0]
    return CouplingTable(times=times, onsite=onsite, rates=rates)
