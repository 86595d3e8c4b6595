"""Shared adaptive integrator for complex mode-amplitude equations."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

__all__ = ["PropagationError", "integrate_schrodinger"]

DEFAULT_RTOL = 1e-11
DEFAULT_ATOL = 1e-13


class PropagationError(RuntimeError):
    """Adaptive stepping failed; carries the time reached before failure."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (reached t={t_reached:.6g})")
        self.t_reached = t_reached


def integrate_schrodinger(
    hamiltonian,
    y0: np.ndarray,
    t_span: tuple[float, float],
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval=None,
    max_step: float = np.inf,
):
    """Solve i dy/dt = H(t, y) y with an adaptive 8th-order Runge-Kutta pair.

    `hamiltonian(t, y)` must return a Hermitian matrix; nonlinear diagonal
    terms may depend on y and are re-evaluated inside every stage. Returns
    (times, states) with states of shape (nt, dim).
    """
    y0 = np.asarray(y0, dtype=complex)

    def rhs(t, y):
        return -1j * (hamiltonian(t, y) @ y)

    sol = solve_ivp(
        rhs,
        t_span,
        y0,
        method="DOP853",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        max_step=max_step,
        dense_output=False,
    )
    if not sol.success:
        t_reached = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        raise PropagationError(sol.message, t_reached)
    return sol.t, sol.y.T
