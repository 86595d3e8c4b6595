"""Full wave-equation solvers on uniform grids.

Split-step Fourier propagation of the 1D/2D time-dependent Schrodinger
equation (optionally with a mean-field density term), a two-particle 1D
solver with contact interaction, imaginary-time ground-state relaxation,
quantum-trajectory reconstruction, and the observable extractors used to
compare against the few-mode models.

The propagators alternate a momentum-space kinetic factor with a
position-space potential kick evaluated at the step midpoint; each full step
is unitary up to roundoff, so the norm is conserved to machine precision.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .couplings import symmetric_orthonormalize
from .potentials import TrapLayout

__all__ = [
    "Grid",
    "GridState",
    "TwoParticleState",
    "EvolutionResult",
    "BohmianEnsemble",
    "tdse_propagate",
    "tdse2d_propagate",
    "two_particle_propagate",
    "imaginary_time_ground_state",
    "bohmian_trajectories",
    "well_populations",
    "orthonormal_well_modes",
    "project_onto_modes",
    "angular_momentum",
    "pair_mode_state",
    "GridError",
    "NumericalBlowupError",
]

_FFT_WORKERS = 2


class GridError(ValueError):
    """Invalid grid, state, or stepping parameters."""


class NumericalBlowupError(RuntimeError):
    """NaN/Inf detected during propagation; carries the time stamp."""

    def __init__(self, t: float):
        super().__init__(f"non-finite wavefunction detected at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid, 1D or 2D, centered on the origin."""

    extents: tuple
    points: tuple

    def __post_init__(self):
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        points = tuple(int(p) for p in np.atleast_1d(self.points))
        if len(extents) != len(points) or len(extents) not in (1, 2):
            raise GridError("extents and points must match and be 1D or 2D")
        for e, p in zip(extents, points):
            if e <= 0:
                raise GridError("extent must be > 0")
            if p < 64:
                raise GridError("need at least 64 points per axis")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "points", points)

    @classmethod
    def one_d(cls, extent: float, points: int) -> "Grid":
        return cls((extent,), (points,))

    @classmethod
    def two_d(cls, extent_x: float, extent_y: float, points_x: int,
              points_y: int) -> "Grid":
        return cls((extent_x, extent_y), (points_x, points_y))

    @property
    def dimensionality(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> tuple:
        return tuple(e / p for e, p in zip(self.extents, self.points))

    def axis(self, i: int = 0) -> np.ndarray:
        e, p = self.extents[i], self.points[i]
        return np.linspace(-e / 2, e / 2, p, endpoint=False)

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    @property
    def y(self) -> np.ndarray:
        if self.dimensionality != 2:
            raise GridError("1D grid has no y axis")
        return self.axis(1)

    def wavenumbers(self, i: int = 0) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.points[i], self.spacing[i])

    def meshes(self):
        if self.dimensionality == 1:
            return (self.x,)
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def max_stable_dt(self) -> float:
        """Largest step that keeps the fastest kinetic phase resolved."""
        dx = min(self.spacing)
        return dx**2 / np.pi


def _norm(psi: np.ndarray, dv: float) -> float:
    return float(np.sqrt(np.sum(np.abs(psi) ** 2) * dv))


@dataclass(frozen=True)
class GridState:
    """Complex wavefunction sampled on a Grid, unit norm.

    Construction verifies normalization (1e-9) and that the state has decayed
    at the box edge (1e-6), so propagation stays free of wrap-around
    artifacts. Pass validate=False to skip for intermediate states.
    """

    grid: Grid
    psi: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != self.grid.points:
            raise GridError(f"psi shape {psi.shape} != grid {self.grid.points}")
        object.__setattr__(self, "psi", psi)
        if self.validate:
            n = _norm(psi, self.grid.cell_volume)
            if abs(n - 1.0) > 1e-9:
                raise GridError(f"state norm {n} deviates from 1")
            edge = self._edge_amplitude()
            if edge > 1e-6:
                raise GridError(
                    f"state amplitude {edge:.2e} at the box edge; enlarge the grid"
                )

    def _edge_amplitude(self) -> float:
        p = np.abs(self.psi)
        if self.grid.dimensionality == 1:
            return float(max(p[0], p[-1]))
        return float(max(p[0, :].max(), p[-1, :].max(), p[:, 0].max(),
                         p[:, -1].max()))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def norm(self) -> float:
        return _norm(self.psi, self.grid.cell_volume)

    def overlap(self, other: "GridState") -> complex:
        return complex(np.sum(np.conj(other.psi) * self.psi) * self.grid.cell_volume)

    @classmethod
    def from_array(cls, grid: Grid, psi, normalize: bool = True,
                   validate: bool = True) -> "GridState":
        psi = np.asarray(psi, dtype=complex)
        if normalize:
            psi = psi / _norm(psi, grid.cell_volume)
        return cls(grid, psi, validate=validate)

    # -- snapshot interchange --

    def to_binary(self, path) -> None:
        """Flat binary snapshot: int32 ndim, int32 sizes, float64 extents,
        then row-major interleaved (re, im) float64 pairs."""
        with open(path, "wb") as fh:
            ndim = self.grid.dimensionality
            fh.write(struct.pack("<i", ndim))
            fh.write(struct.pack(f"<{ndim}i", *self.grid.points))
            fh.write(struct.pack(f"<{ndim}d", *self.grid.extents))
            inter = np.empty(self.psi.size * 2)
            inter[0::2] = self.psi.real.ravel()
            inter[1::2] = self.psi.imag.ravel()
            fh.write(inter.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridState":
        with open(path, "rb") as fh:
            (ndim,) = struct.unpack("<i", fh.read(4))
            points = struct.unpack(f"<{ndim}i", fh.read(4 * ndim))
            extents = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
            grid = Grid(extents, points)
            raw = np.frombuffer(fh.read(), dtype="<f8")
        psi = (raw[0::2] + 1j * raw[1::2]).reshape(points)
        return cls(grid, psi, validate=False)

    def to_csv(self, path, stride: int = 1) -> None:
        """Down-sampled density/real/imag table (1D grids)."""
        if self.grid.dimensionality != 1:
            raise GridError("CSV snapshots are for 1D states; use to_binary")
        x = self.grid.x[::stride]
        psi = self.psi[::stride]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "re_psi", "im_psi", "density"])
            for xi, p in zip(x, psi):
                writer.writerow(
                    f"{v:.12e}" for v in (xi, p.real, p.imag, abs(p) ** 2)
                )


def harmonic_ground_state(grid: Grid, center=0.0, frequency: float = 1.0) -> GridState:
    """Analytic Gaussian ground state of a harmonic well on the grid."""
    if grid.dimensionality == 1:
        x = grid.x
        psi = (frequency / np.pi) ** 0.25 * np.exp(
            -frequency * (x - float(center)) ** 2 / 2
        )
    else:
        cx, cy = np.broadcast_to(np.asarray(center, dtype=float), (2,))
        xx, yy = grid.meshes()
        psi = np.sqrt(frequency / np.pi) * np.exp(
            -frequency * ((xx - cx) ** 2 + (yy - cy) ** 2) / 2
        )
    return GridState.from_array(grid, psi)


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

@dataclass
class EvolutionResult:
    """Snapshots and observable series collected along a propagation."""

    grid: Grid
    times: np.ndarray
    states: list
    observables: dict

    @property
    def final_state(self) -> GridState:
        return self.states[-1]

    def observables_to_csv(self, path) -> None:
        keys = sorted(self.observables)
        cols = [np.asarray(self.observables[k]) for k in keys]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["t"]
            for k, col in zip(keys, cols):
                if col.ndim == 1:
                    header.append(k)
                else:
                    header += [f"{k}{i}" for i in range(col.shape[1])]
            writer.writerow(header)
            for s, t in enumerate(self.times):
                row = [t]
                for col in cols:
                    row += [col[s]] if col.ndim == 1 else list(col[s])
                writer.writerow(f"{v:.12e}" for v in row)


def _check_layout_coverage(layout: TrapLayout, grid: Grid, t_span) -> None:
    """The box must cover every trap center plus a 6 alpha margin."""
    ts = np.linspace(t_span[0], t_span[1], 64)
    centers = np.array([layout.centers(t) for t in ts], dtype=float)
    if grid.dimensionality == 1:
        reach = np.max(np.abs(centers))
        if reach + 6.0 > grid.extents[0] / 2:
            raise GridError(
                f"grid extent {grid.extents[0]} too small for trap centers "
                f"reaching {reach:.2f} (+6 margin)"
            )
    else:
        for axis in range(2):
            reach = np.max(np.abs(centers[..., axis]))
            if reach + 6.0 > grid.extents[axis] / 2:
                raise GridError(
                    f"grid axis {axis} extent {grid.extents[axis]} too small "
                    f"for trap centers reaching {reach:.2f} (+6 margin)"
                )


def _resolve_steps(t_span, dt: float, grid: Grid) -> tuple[int, float]:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise GridError("t_span must advance forward")
    if dt <= 0:
        raise GridError("dt must be > 0")
    limit = grid.max_stable_dt()
    if dt > limit * (1 + 1e-12):
        raise GridError(
            f"dt={dt:.3e} exceeds the kinetic stability limit {limit:.3e} "
            "(spacing^2 / pi)"
        )
    n_steps = max(1, int(np.ceil((t1 - t0) / dt)))
    return n_steps, (t1 - t0) / n_steps


def _absorbing_mask(grid: Grid, fraction: float = 0.1) -> np.ndarray:
    """cos^8 edge mask damping the outer `fraction` of each axis."""

    def axis_mask(n):
        m = np.ones(n)
        w = max(2, int(n * fraction))
        ramp = np.cos(np.linspace(0, np.pi / 2, w)) ** 8
        m[:w] = ramp[::-1]
        m[-w:] = ramp
        return m

    if grid.dimensionality == 1:
        return axis_mask(grid.points[0])
    return np.outer(axis_mask(grid.points[0]), axis_mask(grid.points[1]))


def tdse_propagate(
    layout: TrapLayout,
    psi0: GridState,
    t_span: tuple[float, float],
    dt: float,
    g1d: float = 0.0,
    n_snapshots: int = 128,
    absorber: bool = False,
    observers: dict | None = None,
) -> EvolutionResult:
    """Split-step propagation of the 1D Schrodinger / mean-field equation.

    dt must satisfy dt <= spacing^2 / pi so the fastest kinetic phase stays
    resolved. `observers` maps names to callables (t, psi) -> value sampled
    at every snapshot; norm is always recorded. g1d adds the density term
    g1d |psi|^2 to the potential kick.
    """
    if layout.dimensionality != 1 or psi0.grid.dimensionality != 1:
        raise GridError("tdse_propagate is the 1D solver")
    if not np.isfinite(g1d):
        raise GridError("g1d must be finite")
    grid = psi0.grid
    _check_layout_coverage(layout, grid, t_span)
    n_steps, dt = _resolve_steps(t_span, dt, grid)

    x = grid.x
    dv = grid.cell_volume
    k2 = grid.wavenumbers(0) ** 2
    kin_half = np.exp(-1j * k2 / 2 * dt / 2)
    kin_full = kin_half * kin_half
    mask = _absorbing_mask(grid) if absorber else None

    snap_idx = np.unique(
        np.linspace(0, n_steps, min(n_snapshots, n_steps + 1)).astype(int)
    )
    times, states = [], []
    observables = {"norm": []}
    observers = observers or {}
    for name in observers:
        observables[name] = []

    def record(t, psi):
        times.append(t)
        states.append(GridState(grid, psi.copy(), validate=False))
        observables["norm"].append(_norm(psi, dv))
        for name, fn in observers.items():
            observables[name].append(fn(t, psi))
        if not np.all(np.isfinite(psi.real)):
            raise NumericalBlowupError(t)

    t0 = float(t_span[0])
    psi = psi0.psi.copy()
    record(t0, psi)

    pointer = 1
    step = 0
    while step < n_steps:
        segment_end = snap_idx[pointer]
        psi_k = sfft.fft(psi, workers=_FFT_WORKERS)
        psi_k *= kin_half
        while step < segment_end:
            psi = sfft.ifft(psi_k, workers=_FFT_WORKERS)
            t_mid = t0 + (step + 0.5) * dt
            v = layout.potential(x, t_mid)
            if g1d != 0.0:
                v = v + g1d * np.abs(psi) ** 2
            psi *= np.exp(-1j * v * dt)
            if mask is not None:
                psi *= mask
            step += 1
            psi_k = sfft.fft(psi, workers=_FFT_WORKERS)
            psi_k *= kin_full if step < segment_end else kin_half
        psi = sfft.ifft(psi_k, workers=_FFT_WORKERS)
        record(t0 + step * dt, psi)
        pointer += 1

    for name in observables:
        observables[name] = np.asarray(observables[name])
    return EvolutionResult(grid, np.asarray(times), states, observables)


def tdse2d_propagate(
    layout: TrapLayout,
    psi0: GridState,
    t_span: tuple[float, float],
    dt: float,
    n_snapshots: int = 64,
    absorber: bool = False,
    observers: dict | None = None,
) -> EvolutionResult:
    """Split-step propagation of the 2D Schrodinger equation."""
    if layout.dimensionality != 2 or psi0.grid.dimensionality != 2:
        raise GridError("tdse2d_propagate is the 2D solver")
    grid = psi0.grid
    _check_layout_coverage(layout, grid, t_span)
    n_steps, dt = _resolve_steps(t_span, dt, grid)

    xx, yy = grid.meshes()
    dv = grid.cell_volume
    kx = grid.wavenumbers(0)
    ky = grid.wavenumbers(1)
    kin_half_x = np.exp(-1j * kx**2 / 2 * dt / 2)[:, None]
    kin_half_y = np.exp(-1j * ky**2 / 2 * dt / 2)[None, :]
    kin_full_x = kin_half_x * kin_half_x
    kin_full_y = kin_half_y * kin_half_y
    mask = _absorbing_mask(grid) if absorber else None

    snap_idx = np.unique(
        np.linspace(0, n_steps, min(n_snapshots, n_steps + 1)).astype(int)
    )
    times, states = [], []
    observables = {"norm": []}
    observers = observers or {}
    for name in observers:
        observables[name] = []

    def record(t, psi):
        times.append(t)
        states.append(GridState(grid, psi.copy(), validate=False))
        observables["norm"].append(_norm(psi, dv))
        for name, fn in observers.items():
            observables[name].append(fn(t, psi))
        if not np.all(np.isfinite(psi.real)):
            raise NumericalBlowupError(t)

    t0 = float(t_span[0])
    psi = psi0.psi.copy()
    record(t0, psi)

    pointer = 1
    step = 0
    while step < n_steps:
        segment_end = snap_idx[pointer]
        psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
        psi_k *= kin_half_x
        psi_k *= kin_half_y
        while step < segment_end:
            psi = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
            t_mid = t0 + (step + 0.5) * dt
            v = layout.potential(xx, t_mid, y=yy)
            psi *= np.exp(-1j * v * dt)
            if mask is not None:
                psi *= mask
            step += 1
            psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
            if step < segment_end:
                psi_k *= kin_full_x
                psi_k *= kin_full_y
            else:
                psi_k *= kin_half_x
                psi_k *= kin_half_y
        psi = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
        record(t0 + step * dt, psi)
        pointer += 1

    for name in observables:
        observables[name] = np.asarray(observables[name])
    return EvolutionResult(grid, np.asarray(times), states, observables)


# ---------------------------------------------------------------------------
# two-particle configuration space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoParticleState:
    """Wavefunction on the (x1, x2) configuration grid with fixed exchange
    symmetry ("fermionic" or "bosonic")."""

    grid: Grid
    psi: np.ndarray
    symmetry: str
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.symmetry not in ("fermionic", "bosonic"):
            raise GridError("symmetry must be 'fermionic' or 'bosonic'")
        if self.grid.dimensionality != 2 or self.grid.points[0] != self.grid.points[1]:
            raise GridError("two-particle grid must be square 2D")
        psi = np.asarray(self.psi, dtype=complex)
        object.__setattr__(self, "psi", psi)
        if self.validate:
            n = _norm(psi, self.grid.cell_volume)
            if abs(n - 1.0) > 1e-9:
                raise GridError(f"state norm {n} deviates from 1")
            sign = -1.0 if self.symmetry == "fermionic" else 1.0
            asym = np.max(np.abs(psi - sign * psi.T))
            if asym > 1e-9 * max(1.0, np.max(np.abs(psi))):
                raise GridError(f"exchange symmetry violated by {asym:.2e}")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def norm(self) -> float:
        return _norm(self.psi, self.grid.cell_volume)

    def overlap(self, other: "TwoParticleState") -> complex:
        return complex(np.sum(np.conj(other.psi) * self.psi) * self.grid.cell_volume)


def pair_mode_state(grid: Grid, phi_a: np.ndarray, phi_b: np.ndarray,
                    symmetry: str) -> TwoParticleState:
    """(Anti)symmetrized product of two orthonormal orbitals."""
    sign = -1.0 if symmetry == "fermionic" else 1.0
    psi = np.outer(phi_a, phi_b) + sign * np.outer(phi_b, phi_a)
    dv = grid.cell_volume
    psi = psi / _norm(psi, dv)
    return TwoParticleState(grid, psi, symmetry)


def two_particle_propagate(
    layout: TrapLayout,
    psi0: TwoParticleState,
    interaction_strength: float,
    t_span: tuple[float, float],
    dt: float,
    n_snapshots: int = 64,
    observers: dict | None = None,
) -> EvolutionResult:
    """Two particles in a common 1D layout with a contact interaction.

    The contact term 2 * strength * delta(x1 - x2) is discretized as an
    on-diagonal potential of weight 2 * strength / dx (first-order accurate
    in the spacing); `strength` is the product a_s * omega_p. For fermionic
    states the diagonal amplitude vanishes and the term is inert.

    dt is not tied to the kinetic limit here; the occupied band is low and
    the splitting error is O(dt^2), which the callers validate against
    halved steps.
    """
    if layout.dimensionality != 1:
        raise GridError("two-particle dynamics uses a 1D trap layout")
    grid = psi0.grid
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0 or dt <= 0:
        raise GridError("bad t_span or dt")
    n_steps = max(1, int(np.ceil((t1 - t0) / dt)))
    dt = (t1 - t0) / n_steps

    x = grid.x
    dx = grid.spacing[0]
    dv = grid.cell_volume
    k = grid.wavenumbers(0)
    kin_half_1d = np.exp(-1j * k**2 / 2 * dt / 2)
    kin_full_1d = kin_half_1d * kin_half_1d

    n = grid.points[0]
    diag_idx = np.arange(n)
    contact_phase = np.exp(-1j * (2.0 * interaction_strength / dx) * dt)

    if psi0.symmetry == "fermionic" and interaction_strength != 0.0:
        if np.max(np.abs(np.diag(psi0.psi))) > 1e-9:
            raise GridError("antisymmetric state has nonzero diagonal amplitude")

    snap_idx = np.unique(
        np.linspace(0, n_steps, min(n_snapshots, n_steps + 1)).astype(int)
    )
    times, states = [], []
    observables = {"norm": []}
    observers = observers or {}
    for name in observers:
        observables[name] = []

    def record(t, psi):
        times.append(t)
        states.append(TwoParticleState(grid, psi.copy(), psi0.symmetry,
                                       validate=False))
        observables["norm"].append(_norm(psi, dv))
        for name, fn in observers.items():
            observables[name].append(fn(t, psi))
        if not np.all(np.isfinite(psi.real)):
            raise NumericalBlowupError(t)

    psi = psi0.psi.copy()
    record(t0, psi)

    pointer = 1
    step = 0
    while step < n_steps:
        segment_end = snap_idx[pointer]
        psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
        psi_k *= kin_half_1d[:, None]
        psi_k *= kin_half_1d[None, :]
        while step < segment_end:
            psi = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
            t_mid = t0 + (step + 0.5) * dt
            v1 = layout.potential(x, t_mid)
            phase_1d = np.exp(-1j * v1 * dt)
            psi *= phase_1d[:, None]
            psi *= phase_1d[None, :]
            if interaction_strength != 0.0:
                psi[diag_idx, diag_idx] *= contact_phase
            step += 1
            psi_k = sfft.fft2(psi, workers=_FFT_WORKERS)
            if step < segment_end:
                psi_k *= kin_full_1d[:, None]
                psi_k *= kin_full_1d[None, :]
            else:
                psi_k *= kin_half_1d[:, None]
                psi_k *= kin_half_1d[None, :]
        psi = sfft.ifft2(psi_k, workers=_FFT_WORKERS)
        record(t0 + step * dt, psi)
        pointer += 1

    for name in observables:
        observables[name] = np.asarray(observables[name])
    return EvolutionResult(grid, np.asarray(times), states, observables)


# ---------------------------------------------------------------------------
# imaginary-time ground state
# ---------------------------------------------------------------------------

def grid_energy(layout: TrapLayout, state: GridState, t: float = 0.0,
                g1d: float = 0.0) -> float:
    """<psi| H |psi> with spectral kinetic energy (mean-field term halved
    in the energy functional)."""
    grid = state.grid
    psi = state.psi
    dv = grid.cell_volume
    if grid.dimensionality == 1:
        k2 = grid.wavenumbers(0) ** 2
        kin = np.sum(k2 * np.abs(sfft.fft(psi)) ** 2) / psi.size * dv / 2
        v = layout.potential(grid.x, t)
    else:
        kx2 = grid.wavenumbers(0)[:, None] ** 2
        ky2 = grid.wavenumbers(1)[None, :] ** 2
        kin = np.sum((kx2 + ky2) * np.abs(sfft.fft2(psi)) ** 2) / psi.size * dv / 2
        xx, yy = grid.meshes()
        v = layout.potential(xx, t, y=yy)
    dens = np.abs(psi) ** 2
    pot = np.sum(v * dens) * dv
    mf = 0.5 * g1d * np.sum(dens**2) * dv
    return float(kin + pot + mf)


def imaginary_time_ground_state(
    layout: TrapLayout,
    grid: Grid,
    g1d: float = 0.0,
    t: float = 0.0,
    dt: float = 0.01,
    tol: float = 1e-12,
    max_steps: int = 200_000,
    psi0: np.ndarray | None = None,
) -> tuple[GridState, float]:
    """Relax to the (mean-field) ground state by imaginary-time split steps.

    Returns (state, energy). Convergence is declared when the energy change
    per step drops below tol.
    """
    if grid.dimensionality == 1:
        x = grid.x
        psi = np.exp(-(x**2) / 2).astype(complex) if psi0 is None else psi0.astype(complex)
        k2 = grid.wavenumbers(0) ** 2
        kin_half = np.exp(-k2 / 2 * dt / 2)
        v_static = layout.potential(x, t)

        def step(p):
            p = sfft.ifft(kin_half * sfft.fft(p))
            v = v_static + (g1d * np.abs(p) ** 2 if g1d else 0.0)
            p *= np.exp(-v * dt)
            return sfft.ifft(kin_half * sfft.fft(p))

    else:
        xx, yy = grid.meshes()
        psi = (
            np.exp(-(xx**2 + yy**2) / 2).astype(complex)
            if psi0 is None
            else psi0.astype(complex)
        )
        kx2 = grid.wavenumbers(0)[:, None] ** 2
        ky2 = grid.wavenumbers(1)[None, :] ** 2
        kin_half = np.exp(-(kx2 + ky2) / 2 * dt / 2)
        v_static = layout.potential(xx, t, y=yy)

        def step(p):
            p = sfft.ifft2(kin_half * sfft.fft2(p))
            v = v_static + (g1d * np.abs(p) ** 2 if g1d else 0.0)
            p *= np.exp(-v * dt)
            return sfft.ifft2(kin_half * sfft.fft2(p))

    dv = grid.cell_volume
    psi /= _norm(psi, dv)
    energy = grid_energy(layout, GridState(grid, psi, validate=False), t, g1d)
    for _ in range(max_steps):
        psi = step(psi)
        psi /= _norm(psi, dv)
        new_energy = grid_energy(layout, GridState(grid, psi, validate=False), t, g1d)
        if abs(new_energy - energy) < tol:
            energy = new_energy
            break
        energy = new_energy
    state = GridState(grid, psi / _norm(psi, dv), validate=False)
    return state, float(energy)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def well_populations(state: GridState, layout: TrapLayout, t: float) -> np.ndarray:
    """Probability captured by the Voronoi cell of each trap center.

    Cells partition the grid (boundaries at center midpoints in 1D, nearest
    center in 2D), so the populations add up to the state norm exactly.
    """
    centers = layout.centers(t)
    dens = state.density * state.grid.cell_volume
    if layout.dimensionality == 1:
        centers = np.asarray(centers, dtype=float)
        order = np.argsort(centers)
        x = state.grid.x
        out = np.zeros(len(centers))
        bounds = (centers[order][1:] + centers[order][:-1]) / 2
        cell = np.searchsorted(bounds, x)
        for pos, trap_idx in enumerate(order):
            out[trap_idx] = np.sum(dens[cell == pos])
        return out
    xx, yy = state.grid.meshes()
    d2 = np.stack(
        [(xx - cx) ** 2 + (yy - cy) ** 2 for cx, cy in np.asarray(centers)]
    )
    nearest = np.argmin(d2, axis=0)
    return np.array([np.sum(dens[nearest == i]) for i in range(len(centers))])


def orthonormal_well_modes(
    layout: TrapLayout, x: np.ndarray, t: float, level: int = 0
) -> np.ndarray:
    """Orthonormalized single-well eigenstates (symmetric overlap
    treatment), returned in trap order (rows)."""
    from .potentials import asymptotic_eigenstate

    centers = np.asarray(layout.centers(t), dtype=float)
    order = np.argsort(centers)
    raw = np.empty((len(layout.traps), x.size))
    for pos, trap_idx in enumerate(order):
        raw[pos] = asymptotic_eigenstate(layout.traps[trap_idx], level, x, t=t)
    dx = x[1] - x[0]
    basis = symmetric_orthonormalize(raw, dx)
    out = np.empty_like(basis)
    for pos, trap_idx in enumerate(order):
        out[trap_idx] = basis[pos]
    return out


def project_onto_modes(state: GridState, modes: np.ndarray,
                       check_orthonormal: bool = True) -> np.ndarray:
    """Amplitudes <phi_i | psi> for an orthonormal mode basis (rows)."""
    modes = np.asarray(modes)
    dv = state.grid.cell_volume
    if check_orthonormal:
        gram = modes.conj() @ modes.T * dv
        if np.max(np.abs(gram - np.eye(modes.shape[0]))) > 1e-8:
            raise GridError("mode basis is not orthonormal")
    return modes.conj() @ state.psi * dv


def angular_momentum(state: GridState, center=(0.0, 0.0)) -> float:
    """<L_z> about `center` for a 2D state, via spectral derivatives."""
    grid = state.grid
    if grid.dimensionality != 2:
        raise GridError("angular momentum needs a 2D state")
    psi = state.psi
    kx = grid.wavenumbers(0)[:, None]
    ky = grid.wavenumbers(1)[None, :]
    psi_k = sfft.fft2(psi)
    dpsi_dx = sfft.ifft2(1j * kx * psi_k)
    dpsi_dy = sfft.ifft2(1j * ky * psi_k)
    xx, yy = grid.meshes()
    cx, cy = center
    integrand = np.conj(psi) * (-1j) * (
        (xx - cx) * dpsi_dy - (yy - cy) * dpsi_dx
    )
    return float(np.real(np.sum(integrand)) * grid.cell_volume)


# ---------------------------------------------------------------------------
# quantum trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BohmianEnsemble:
    """Trajectory bundle reconstructed from a stored 1D evolution."""

    times: np.ndarray
    positions: np.ndarray  # (n_samples, nt)
    velocities: np.ndarray  # (n_samples, nt)
    clamped: np.ndarray  # bool, True where the density floor was hit
    max_speeds: np.ndarray  # (n_samples,)

    @property
    def peak_speed(self) -> float:
        return float(np.max(self.max_speeds))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            n = self.positions.shape[0]
            writer.writerow(["t"] + [f"x{i}" for i in range(n)])
            for s, t in enumerate(self.times):
                writer.writerow(
                    f"{v:.12e}" for v in [t] + list(self.positions[:, s])
                )


def bohmian_velocity_field(evolution: EvolutionResult,
                           rho_floor: float = 1e-30) -> np.ndarray:
    """v = j / rho sampled on the stored (t, x) lattice, clamped below the
    density floor (clamped points are tagged by callers via the same floor)."""
    grid = evolution.grid
    k = grid.wavenumbers(0)
    v_field = np.empty((len(evolution.states), grid.points[0]))
    for s, state in enumerate(evolution.states):
        psi = state.psi
        dpsi = sfft.ifft(1j * k * sfft.fft(psi))
        current = np.imag(np.conj(psi) * dpsi)
        rho = np.abs(psi) ** 2
        v_field[s] = current / np.maximum(rho, rho_floor)
    return v_field


def bohmian_trajectories(
    evolution: EvolutionResult,
    n_samples: int = 30,
    seed: int = 7,
    rho_floor: float = 1e-30,
    substeps: int = 4,
) -> BohmianEnsemble:
    """Integrate dx/dt = j/rho for an ensemble drawn from the initial density.

    Initial positions are inverse-CDF samples of |psi(x, 0)|^2 with a seeded
    generator. The velocity field is interpolated bilinearly in (t, x) and
    integrated with RK4 substeps between stored snapshots. Speeds at grid
    cells whose density is below rho_floor are clamped and flagged.
    """
    grid = evolution.grid
    if grid.dimensionality != 1:
        raise GridError("trajectories are computed for 1D evolutions")
    times = evolution.times
    x = grid.x
    dx = grid.spacing[0]
    v_field = bohmian_velocity_field(evolution, rho_floor)
    rho0 = evolution.states[0].density
    clamp_speed = np.max(np.abs(v_field))

    cdf = np.cumsum(rho0)
    cdf = cdf / cdf[-1]
    rng = np.random.default_rng(seed)
    quantiles = np.sort(rng.uniform(size=n_samples))
    x0 = np.interp(quantiles, cdf, x)

    def velocity(t, xs):
        s = np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2)
        w = (t - times[s]) / (times[s + 1] - times[s])
        idx = np.clip(((xs - x[0]) / dx).astype(int), 0, len(x) - 2)
        fx = (xs - x[idx]) / dx
        row = (1 - w) * v_field[s] + w * v_field[s + 1]
        return (1 - fx) * row[idx] + fx * row[idx + 1]

    n_t = len(times)
    positions = np.empty((n_samples, n_t))
    velocities = np.empty((n_samples, n_t))
    clamped = np.zeros((n_samples, n_t), dtype=bool)
    positions[:, 0] = x0
    velocities[:, 0] = velocity(times[0], x0)

    xs = x0.copy()
    for s in range(n_t - 1):
        t_a, t_b = times[s], times[s + 1]
        h = (t_b - t_a) / substeps
        t = t_a
        for _ in range(substeps):
            k1 = velocity(t, xs)
            k2 = velocity(t + h / 2, xs + h / 2 * k1)
            k3 = velocity(t + h / 2, xs + h / 2 * k2)
            k4 = velocity(t + h, xs + h * k3)
            xs = xs + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            xs = np.clip(xs, x[0], x[-1])
            t += h
        positions[:, s + 1] = xs
        v_now = velocity(t_b, xs)
        velocities[:, s + 1] = v_now
        clamped[:, s + 1] = np.abs(v_now) >= clamp_speed * (1 - 1e-12)

    max_speeds = np.max(np.abs(velocities), axis=1)
    return BohmianEnsemble(times, positions, velocities, clamped, max_speeds)
