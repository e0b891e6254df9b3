"""Physical constants and unit conversions.

Internal units everywhere: time in us, angular frequency in rad/us, length
in um.  Conventional "2pi x MHz" values are converted at the boundary.
"""

import math

from scipy import constants

TWO_PI = 2.0 * math.pi

KB = constants.k  # J/K
HBAR = constants.hbar  # J s
E_CHARGE = constants.e  # C
A0 = constants.physical_constants["Bohr radius"][0]  # m
Z0 = 377.0  # ohm, rounded free-space impedance used for the beam power integral

RB87_MASS = 1.4431e-25  # kg


def mhz_to_rad_us(f_mhz):
    """Convert a frequency in MHz (cycles) to rad/us."""
    return TWO_PI * f_mhz


def rad_us_to_mhz(omega):
    return omega / TWO_PI


def khz_to_rad_us(f_khz):
    return TWO_PI * f_khz * 1e-3


def lifetime_to_rate(tau_us):
    """Decay rate (1/us) for a lifetime in us."""
    return 1.0 / tau_us


def thermal_speed(temperature, mass=RB87_MASS):
    """One-dimensional thermal speed sqrt(kT/m) in um/us (equal to m/s)."""
    return math.sqrt(KB * temperature / mass)
