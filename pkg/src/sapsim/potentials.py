"""Trapping landscapes, trap trajectories, pulse shapes, and single-well eigenstates.

Everything is expressed in dimensionless oscillator units: hbar = m = 1,
lengths in units of the ground-state width alpha = sqrt(hbar / m / omega_x),
times in 1/omega_x, energies in hbar * omega_x.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import erf, eval_hermite, gammaln

__all__ = [
    "StaticTrajectory",
    "Cos2ApproachTrajectory",
    "LinearTrajectory",
    "PiecewiseLinearTrajectory",
    "CustomSamplesTrajectory",
    "Trajectory",
    "TrapSpec",
    "TrapLayout",
    "PulseShape",
    "evaluate_potential",
    "trap_positions",
    "asymptotic_eigenstate",
    "harmonic_eigenfunction",
    "pulse_value",
]


class PotentialError(ValueError):
    """Invalid trap, trajectory, or layout parameters."""


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def _as_direction(direction) -> np.ndarray | float:
    """Normalize a direction spec: scalar sign for 1D, unit vector for 2D."""
    if np.isscalar(direction):
        if direction not in (1, -1, 1.0, -1.0):
            raise PotentialError("1D direction must be +1 or -1")
        return float(direction)
    vec = np.asarray(direction, dtype=float)
    if vec.shape != (2,):
        raise PotentialError("2D direction must be a length-2 vector")
    norm = np.hypot(vec[0], vec[1])
    if norm == 0:
        raise PotentialError("direction vector must be nonzero")
    return vec / norm


@dataclass(frozen=True)
class StaticTrajectory:
    """Trap center fixed at `center` (scalar in 1D, length-2 in 2D)."""

    center: Union[float, tuple]
    t_max: float = np.inf
    kind: str = field(default="static", init=False)

    def position(self, t):
        t = np.asarray(t, dtype=float)
        c = np.asarray(self.center, dtype=float)
        if c.ndim == 0:
            return np.broadcast_to(c, t.shape).copy() if t.ndim else float(c)
        out = np.broadcast_to(c, t.shape + (2,)).copy()
        return out if t.ndim else c.copy()


@dataclass(frozen=True)
class Cos2ApproachTrajectory:
    """Approach-and-return trap motion along a fixed direction.

    The trap sits at distance d_max from the origin for t <= delay, then the
    distance follows d_min + (d_max - d_min) * cos^2(pi (t - delay) / tau),
    i.e. it reaches d_min at delay + tau/2 and is back at d_max at
    delay + tau. With return_to_max=False the trap instead parks at d_min
    from delay + tau/2 onwards (used for the trapping-beam splitter endings).

    direction: +1/-1 selects the axis side in 1D; a 2-vector sets the ray
    in 2D.
    """

    d_max: float
    d_min: float
    tau: float
    delay: float = 0.0
    direction: Union[float, tuple] = 1.0
    return_to_max: bool = True
    t_max: float = np.inf
    kind: str = field(default="cos-squared-approach", init=False)

    def __post_init__(self):
        if not (self.d_max >= self.d_min > 0):
            raise PotentialError("require d_max >= d_min > 0")
        if self.tau <= 0:
            raise PotentialError("require tau > 0")
        if self.delay < 0:
            raise PotentialError("require delay >= 0")
        object.__setattr__(self, "_dir", _as_direction(self.direction))

    def distance(self, t):
        t = np.asarray(t, dtype=float)
        s = np.clip(t - self.delay, 0.0, self.tau)
        if not self.return_to_max:
            s = np.minimum(s, self.tau / 2)
        d = self.d_min + (self.d_max - self.d_min) * np.cos(np.pi * s / self.tau) ** 2
        return d if t.ndim else float(d)

    def position(self, t):
        d = self.distance(t)
        u = self._dir
        if np.isscalar(u) or np.ndim(u) == 0:
            return d * u
        return np.multiply.outer(d, u) if np.ndim(d) else d * u


@dataclass(frozen=True)
class LinearTrajectory:
    """Uniform motion from `start` to `end` over [0, t_max]."""

    start: float
    end: float
    t_max: float
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        if self.t_max <= 0:
            raise PotentialError("require t_max > 0")

    def position(self, t):
        t = np.asarray(t, dtype=float)
        frac = np.clip(t / self.t_max, 0.0, 1.0)
        out = self.start + (self.end - self.start) * frac
        return out if t.ndim else float(out)


@dataclass(frozen=True)
class PiecewiseLinearTrajectory:
    """Linear interpolation through (times, positions) knots."""

    times: tuple
    positions: tuple
    kind: str = field(default="piecewise-linear", init=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.size < 2 or t.size != x.size:
            raise PotentialError("need matching 1D knot arrays with >= 2 points")
        if np.any(np.diff(t) <= 0):
            raise PotentialError("knot times must be strictly increasing")
        object.__setattr__(self, "_t", t)
        object.__setattr__(self, "_x", x)

    @property
    def t_max(self) -> float:
        return float(self._t[-1])

    def position(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self._t, self._x)
        return out if t.ndim else float(out)


class CustomSamplesTrajectory(PiecewiseLinearTrajectory):
    """Trajectory read from externally supplied (t, x) samples."""

    def __init__(self, times, positions):
        super().__init__(tuple(times), tuple(positions))
        object.__setattr__(self, "kind", "custom-samples")

    @classmethod
    def from_csv(cls, path) -> "CustomSamplesTrajectory":
        """Load a two-column CSV of (t, x) samples, header row optional."""
        times, positions = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    t, x = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header or comment line
                times.append(t)
                positions.append(x)
        if len(times) < 2:
            raise PotentialError(f"no usable samples in {path}")
        return cls(times, positions)


Trajectory = Union[
    StaticTrajectory,
    Cos2ApproachTrajectory,
    LinearTrajectory,
    PiecewiseLinearTrajectory,
    CustomSamplesTrajectory,
]


def sap_trajectories(
    d_max: float, d_min: float, tau: float, delay: float
) -> tuple[Trajectory, Trajectory, Trajectory]:
    """Left/middle/right trap trajectories of the counterintuitive sequence.

    The right trap approaches the (static) middle trap first, the left trap
    follows after `delay`. Total protocol time is tau + delay.
    """
    right = Cos2ApproachTrajectory(d_max, d_min, tau, delay=0.0, direction=+1.0,
                                   t_max=tau + delay)
    left = Cos2ApproachTrajectory(d_max, d_min, tau, delay=delay, direction=-1.0,
                                  t_max=tau + delay)
    middle = StaticTrajectory(0.0, t_max=tau + delay)
    return left, middle, right


def trap_positions(trajectories: Sequence[Trajectory], t):
    """Evaluate all trap-center positions at time t.

    Raises if t lies outside [0, t_max] of any trajectory.
    """
    t_arr = np.asarray(t, dtype=float)
    t_lim = min(traj.t_max for traj in trajectories)
    if np.any(t_arr < 0) or np.any(t_arr > t_lim):
        raise PotentialError(f"t={t} outside the schedule support [0, {t_lim}]")
    return np.array([traj.position(t) for traj in trajectories])


# ---------------------------------------------------------------------------
# traps and layouts
# ---------------------------------------------------------------------------

TRAP_KINDS = ("truncated-harmonic", "gaussian", "poschl-teller", "square-well")


@dataclass(frozen=True)
class TrapSpec:
    """One trapping well and its center trajectory.

    kind selects the functional form:
      truncated-harmonic : 0.5 * frequency^2 * (x - c)^2
      gaussian           : -depth * exp(-(x - c)^2 / (2 width^2))
      poschl-teller      : -depth * sech^2((x - c) / width)
      square-well        : -depth for |x - c| <= width / 2, else 0

    Truncation of the harmonic wells arises from the pointwise-minimum
    composition rule of TrapLayout, not from the single-well form.
    """

    kind: str
    trajectory: Trajectory
    frequency: float = 1.0
    depth: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in TRAP_KINDS:
            raise PotentialError(f"unknown trap kind {self.kind!r}")
        if self.kind == "truncated-harmonic" and self.frequency <= 0:
            raise PotentialError("frequency must be > 0")
        if self.kind != "truncated-harmonic":
            if self.depth <= 0 or self.width <= 0:
                raise PotentialError("depth and width must be > 0")

    def profile(self, r2: np.ndarray) -> np.ndarray:
        """Potential as a function of squared distance to the trap center."""
        if self.kind == "truncated-harmonic":
            return 0.5 * self.frequency**2 * r2
        if self.kind == "gaussian":
            return -self.depth * np.exp(-r2 / (2 * self.width**2))
        if self.kind == "poschl-teller":
            return -self.depth / np.cosh(np.sqrt(r2) / self.width) ** 2
        # square-well
        return np.where(r2 <= (self.width / 2) ** 2, -self.depth, 0.0)


@dataclass(frozen=True)
class TrapLayout:
    """An ordered collection of traps composed by pointwise minimum."""

    traps: tuple
    dimensionality: int = 1

    def __post_init__(self):
        if len(self.traps) < 1:
            raise PotentialError("layout needs at least one trap")
        if self.dimensionality not in (1, 2):
            raise PotentialError("dimensionality must be 1 or 2")
        for trap in self.traps:
            probe = np.asarray(trap.trajectory.position(0.0), dtype=float)
            dim = 1 if probe.ndim == 0 else probe.shape[-1]
            if dim != self.dimensionality:
                raise PotentialError(
                    "trajectory dimensionality does not match the layout"
                )

    @property
    def t_max(self) -> float:
        return min(trap.trajectory.t_max for trap in self.traps)

    def centers(self, t) -> np.ndarray:
        return trap_positions([trap.trajectory for trap in self.traps], t)

    def potential(self, x, t: float, y=None) -> np.ndarray:
        """Joint potential at time t: min over the per-trap potentials.

        1D: pass positions in `x`. 2D: pass meshgrid-style `x` and `y`.
        """
        if self.dimensionality == 1:
            if y is not None:
                raise PotentialError("1D layout takes no y coordinate")
            x = np.asarray(x, dtype=float)
            out = None
            for trap in self.traps:
                c = float(trap.trajectory.position(t))
                v = trap.profile((x - c) ** 2)
                out = v if out is None else np.minimum(out, v)
            return out
        if y is None:
            raise PotentialError("2D layout needs both x and y coordinates")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = None
        for trap in self.traps:
            cx, cy = np.asarray(trap.trajectory.position(t), dtype=float)
            v = trap.profile((x - cx) ** 2 + (y - cy) ** 2)
            out = v if out is None else np.minimum(out, v)
        return out


def evaluate_potential(layout: TrapLayout, x, t: float, y=None) -> np.ndarray:
    """Joint trapping potential of `layout` at position(s) x (and y in 2D)."""
    return layout.potential(x, t, y=y)


def triple_harmonic_layout(
    d_max: float, d_min: float, tau: float, delay: float, frequency: float = 1.0
) -> TrapLayout:
    """Standard triple-well transport layout with cos^2 center trajectories."""
    left, middle, right = sap_trajectories(d_max, d_min, tau, delay)
    traps = tuple(
        TrapSpec("truncated-harmonic", traj, frequency=frequency)
        for traj in (left, middle, right)
    )
    return TrapLayout(traps)


# ---------------------------------------------------------------------------
# single-well eigenstates
# ---------------------------------------------------------------------------

def harmonic_eigenfunction(n: int, x: np.ndarray, frequency: float = 1.0,
                           center: float = 0.0) -> np.ndarray:
    """Normalized n-th harmonic-oscillator eigenfunction (hbar = m = 1)."""
    if n < 0:
        raise PotentialError("level must be >= 0")
    xi = np.sqrt(frequency) * (np.asarray(x, dtype=float) - center)
    # log-normalization avoids overflow of n! for moderate n
    log_norm = 0.25 * np.log(frequency / np.pi) - 0.5 * (
        n * np.log(2.0) + gammaln(n + 1)
    )
    return np.exp(log_norm - xi**2 / 2) * eval_hermite(n, xi)


def _fourier_kinetic_matrix(x: np.ndarray) -> np.ndarray:
    """Dense -0.5 d^2/dx^2 on a uniform periodic grid (spectral accuracy)."""
    n = x.size
    dx = x[1] - x[0]
    k = 2 * np.pi * np.fft.fftfreq(n, dx)
    row = np.fft.ifft(k**2 / 2).real
    idx = np.subtract.outer(np.arange(n), np.arange(n)) % n
    return row[idx]


def bound_state_count(trap: TrapSpec, grid_x: np.ndarray) -> int:
    """Number of negative-energy levels of the isolated trap (inf if harmonic)."""
    if trap.kind == "truncated-harmonic":
        return np.iinfo(np.int64).max
    v = trap.profile((grid_x - np.mean(grid_x)) ** 2)
    h = _fourier_kinetic_matrix(grid_x) + np.diag(v)
    from scipy.linalg import eigh

    w = eigh(h, eigvals_only=True)
    return int(np.sum(w < 0))


def asymptotic_eigenstate(
    trap: TrapSpec, level: int, x: np.ndarray, t: float = 0.0
) -> np.ndarray:
    """Normalized eigenfunction of the isolated trap, sampled on grid `x`.

    Harmonic wells use the analytic Hermite-Gaussian form; the other kinds
    are diagonalized with a dense spectral Hamiltonian on the grid. The
    returned array is real with unit L2 norm (trapezoid weight dx).

    Raises PotentialError if `level` exceeds the bound spectrum.
    """
    if level < 0:
        raise PotentialError("level must be >= 0")
    x = np.asarray(x, dtype=float)
    center = float(np.asarray(trap.trajectory.position(t), dtype=float))
    if trap.kind == "truncated-harmonic":
        return harmonic_eigenfunction(level, x, trap.frequency, center)

    dx = x[1] - x[0]
    v = trap.profile((x - center) ** 2)
    h = _fourier_kinetic_matrix(x) + np.diag(v)
    from scipy.linalg import eigh

    w, vecs = eigh(h)
    n_bound = int(np.sum(w < 0))
    if level >= n_bound:
        raise PotentialError(
            f"level {level} exceeds the {n_bound} bound states of this trap"
        )
    psi = vecs[:, level] / np.sqrt(dx)
    # fix global sign: positive lobe on the left-most antinode
    first = np.argmax(np.abs(psi) > 0.1 * np.max(np.abs(psi)))
    if psi[first] < 0:
        psi = -psi
    return psi


def single_well_energies(trap: TrapSpec, x: np.ndarray, n_levels: int,
                         t: float = 0.0) -> np.ndarray:
    """Lowest bound-state energies of the isolated trap on grid `x`."""
    x = np.asarray(x, dtype=float)
    center = float(np.asarray(trap.trajectory.position(t), dtype=float))
    if trap.kind == "truncated-harmonic":
        return trap.frequency * (np.arange(n_levels) + 0.5)
    v = trap.profile((x - center) ** 2)
    h = _fourier_kinetic_matrix(x) + np.diag(v)
    from scipy.linalg import eigh

    w = eigh(h, eigvals_only=True)
    return w[:n_levels]


# ---------------------------------------------------------------------------
# pulse shapes
# ---------------------------------------------------------------------------

PULSE_KINDS = (
    "gaussian",
    "sin-squared",
    "squared-sinusoid",
    "error-function",
    "linear",
    "digital-piecewise",
)


@dataclass(frozen=True)
class PulseShape:
    """Deterministic scalar pulse profile for coupling schedules.

    kind / parameters:
      gaussian          : amplitude * exp(-(t - center)^2 / (2 width^2))
      sin-squared       : amplitude * sin^2(pi (t - start) / duration) on
                          [start, start + duration], 0 outside
      squared-sinusoid  : amplitude * sin^2(pi t / (2 duration)) ("rise") or
                          amplitude * cos^2(pi t / (2 duration)) ("fall")
      error-function    : amplitude * (1 + erf((t - center) / width)) / 2
      linear            : ramp 0 -> amplitude over [start, start + duration]
      digital-piecewise : previous-value hold through (times, values) steps
    """

    kind: str
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0
    start: float = 0.0
    duration: float = 1.0
    phase: str = "rise"
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise PotentialError(f"unknown pulse kind {self.kind!r}")
        if self.amplitude < 0:
            raise PotentialError("amplitude must be >= 0")
        if self.kind in ("gaussian", "error-function") and self.width <= 0:
            raise PotentialError("width must be > 0")
        if self.kind in ("sin-squared", "squared-sinusoid", "linear"):
            if self.duration <= 0:
                raise PotentialError("duration must be > 0")
        if self.kind == "digital-piecewise":
            if len(self.times) == 0 or len(self.times) != len(self.values):
                raise PotentialError("digital pulse needs matching times/values")
            if np.any(np.diff(np.asarray(self.times)) <= 0):
                raise PotentialError("digital pulse times must increase")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        a = self.amplitude
        if self.kind == "gaussian":
            out = a * np.exp(-((t - self.center) ** 2) / (2 * self.width**2))
        elif self.kind == "sin-squared":
            s = (t - self.start) / self.duration
            out = np.where(
                (s >= 0) & (s <= 1), a * np.sin(np.pi * np.clip(s, 0, 1)) ** 2, 0.0
            )
        elif self.kind == "squared-sinusoid":
            s = np.clip(t / self.duration, 0.0, 1.0)
            if self.phase == "rise":
                out = a * np.sin(np.pi * s / 2) ** 2
            else:
                out = a * np.cos(np.pi * s / 2) ** 2
        elif self.kind == "error-function":
            out = a * (1 + erf((t - self.center) / self.width)) / 2
        elif self.kind == "linear":
            s = np.clip((t - self.start) / self.duration, 0.0, 1.0)
            out = a * s
        else:  # digital-piecewise
            idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
            vals = np.asarray(self.values, dtype=float)
            out = np.where(idx >= 0, vals[np.clip(idx, 0, len(vals) - 1)], 0.0)
        return out if t.ndim else float(out)


def pulse_value(shape: PulseShape, t):
    """Evaluate a pulse shape at time(s) t."""
    return shape.value(t)
