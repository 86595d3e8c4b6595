"""Simulation toolkit for spatial adiabatic passage in matter-wave, spin-chain,
and coupled-waveguide systems.

Matter-wave modules work in oscillator units (hbar = m = omega_x = 1, lengths
in the ground-state width alpha); waveguide propagation uses inverse-length
units along z.
"""

__version__ = "0.1.0"

from . import couplings, dsap, fewmode, grid, potentials, waveguide  # noqa: F401
