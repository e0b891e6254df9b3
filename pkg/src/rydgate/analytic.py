"""Closed-form references.

Adiabatic-elimination amplitudes for a constant far-detuned ladder, laser
power to Rabi frequency, dipole matrix elements for 87Rb, and the blockade
radius.  The ladder amplitudes double as the oracle for the numerical
propagator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dynamics import ContractViolation
from .units import A0, E_CHARGE, HBAR, Z0


def adiabatic_amplitudes(omega1, omega2, delta, t):
    """Ground and Rydberg amplitudes of a constant ladder after eliminating |p>.

    Parameters
    ----------
    omega1, omega2 : float
        Lower and upper Rabi frequencies (rad/us).
    delta : float
        Intermediate detuning (rad/us), nonzero.
    t : float or array_like
        Time (us).

    Returns
    -------
    (C01, C0r) : tuple of complex or complex arrays

    Notes
    -----
    The phase of ``C0r`` follows the published closed form, which is written
    in a frame where the Rydberg light shift is removed; ``|C0r|`` and
    ``C01`` are frame independent.
    """
    s = omega1 ** 2 + omega2 ** 2
    if s <= 0:
        raise ContractViolation("at least one Rabi frequency must be nonzero")
    if delta == 0:
        raise ContractViolation("adiabatic elimination needs a nonzero detuning")
    t = np.asarray(t, dtype=float)
    c01 = (omega2 ** 2 + omega1 ** 2 * np.exp(1j * t * s / (4 * delta))) / s
    c0r = (2 * omega1 * omega2 / s) * np.exp(1j * t * (omega1 ** 2 - omega2 ** 2) / (8 * delta)) \
        * np.sin(s * t / (8 * delta))
    return c01, c0r


def max_rydberg_population(ratio):
    """Peak Rydberg population ``(2r/(1+r^2))^2`` for ``r = omega1/omega2``."""
    if ratio <= 0:
        raise ContractViolation("ratio must be positive")
    return (2 * ratio / (1 + ratio ** 2)) ** 2


@dataclass(frozen=True)
class BeamSpec:
    power: float  # W
    waist: float  # um, 1/e^2 intensity half-width
    profile_order: int = 2  # 2 Gaussian, 10 super-Gaussian
    wavelength: float = 1.006  # um

    def __post_init__(self):
        if self.power < 0:
            raise ContractViolation("beam power must be >= 0")
        if self.waist <= 0:
            raise ContractViolation("beam waist must be > 0")
        if self.profile_order not in (2, 10):
            raise ContractViolation("profile_order must be 2 or 10")


def effective_area(waist, order):
    """``int exp(-2 (r/w)^order) 2 pi r dr`` in the units of ``waist**2``."""
    if order == 2:
        return math.pi * waist ** 2 / 2
    val, _ = integrate.quad(lambda u: u * math.exp(-2 * u ** order), 0.0, np.inf,
                            epsabs=1e-14, epsrel=1e-12)
    return 2 * math.pi * waist ** 2 * val


def peak_field(beam):
    """Central field amplitude E0 (V/m) of a beam carrying ``beam.power``."""
    area = effective_area(beam.waist * 1e-6, beam.profile_order)
    return math.sqrt(2 * Z0 * beam.power / area)


_DIPOLE = {"5S-6P32": 0.528, "5S-6P12": 0.235}


def dipole_element(n=100, transition="6P-nD"):
    """Radial dipole matrix element in units of a0."""
    if transition in _DIPOLE:
        return _DIPOLE[transition]
    if transition != "6P-nD":
        raise ContractViolation(f"unknown transition {transition!r}")
    if n < 20:
        raise ContractViolation("6P-nD scaling law needs n >= 20")
    return 0.035 * (53.0 / n) ** 1.5


def power_to_rabi(beam, dipole_matrix_element):
    """Peak Rabi frequency (rad/us) for a beam and a dipole element in a0."""
    if dipole_matrix_element <= 0:
        raise ContractViolation("dipole element must be positive")
    omega_si = E_CHARGE * peak_field(beam) * dipole_matrix_element * A0 / HBAR
    return omega_si * 1e-6


def blockade_radius(c6, omega_eff):
    """``(C6/omega_eff)**(1/6)`` in um."""
    if c6 <= 0 or omega_eff <= 0:
        raise ContractViolation("C6 and omega_eff must be positive")
    return (c6 / omega_eff) ** (1.0 / 6.0)
