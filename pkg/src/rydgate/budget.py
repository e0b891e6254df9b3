"""Gate error channels versus gate speed.

Channels follow the usual small-error budget: spontaneous emission from
the intermediate and Rydberg levels, Doppler-induced rotation errors,
thermal washout of the Rydberg spin wave, storage/retrieval inefficiency,
laser intensity noise and transverse intensity inhomogeneity.  They are
treated as independent, so the total fidelity is the product of the
channel fidelities.

Simulated channels (decay, Doppler, spatial) are reported as the excess
infidelity over the lossless, Doppler-free, homogeneous run of the same
pulse, so a channel that is switched off contributes exactly zero.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .analytic import blockade_radius
from .dynamics import ContractViolation, IntegrationFailure
from .gate import CONFIGS, DriveParams, PulseShape, gate_fidelity, run_gate
from .units import KB, RB87_MASS, TWO_PI, thermal_speed

log = logging.getLogger(__name__)

BLOCKADE_FACTOR = 1e6
QUAD_REL_TOL = 1e-7  # propagation tolerance for quadrature nodes
DEFAULT_C6 = TWO_PI * 2.3 * 5.85 ** 6  # rad/us um^6, from (2pi x 2.3 MHz, 5.85 um)
CHANNELS = ("E_p", "E_r", "E_dop", "E_th", "E_st", "E_blockade", "E_noise", "E_spatial")


class OutOfRegime(ValueError):
    """A closed-form channel was evaluated outside its validity range."""


@dataclass(frozen=True)
class EnsembleParams:
    """Cold-ensemble settings.

    ``rydberg_spinwave_wavelength`` left as ``None`` is computed from the
    excitation wavelengths, ``1/|1/lambda1 - 1/lambda2|`` (0.726 um for
    421.7 nm and 1006 nm; the quoted round value is 0.714 um).
    """

    temperature: float = 1e-6  # K
    atomic_mass: float = RB87_MASS  # kg
    density: float = 1e2  # um^-3
    storage_wavelength: float = 0.795  # um
    ground_spinwave_wavelength: float = 1e5  # um
    rydberg_spinwave_wavelength: float | None = None  # um
    cavity_finesse: float | None = None
    storage_exponent: int = 1  # power of eta charged to the gate

    def __post_init__(self):
        for name in ("temperature", "atomic_mass", "density", "storage_wavelength",
                     "ground_spinwave_wavelength"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"ensemble.{name} must be positive")
        if self.rydberg_spinwave_wavelength is not None and not self.rydberg_spinwave_wavelength > 0:
            raise ContractViolation("ensemble.rydberg_spinwave_wavelength must be positive")
        if self.cavity_finesse is not None and not self.cavity_finesse > 0:
            raise ContractViolation("ensemble.cavity_finesse must be positive")
        if self.storage_exponent < 1:
            raise ContractViolation("ensemble.storage_exponent must be >= 1")

    def rydberg_wavelength(self, drive):
        if self.rydberg_spinwave_wavelength is not None:
            return self.rydberg_spinwave_wavelength
        return 1.0 / abs(_wavenumber(drive) / TWO_PI)


@dataclass
class ErrorBudget:
    omega_eff: float  # rad/us
    blockade_radius: float  # um
    channels: dict
    total_fidelity: float
    flags: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def row(self):
        """Values for the CSV columns of :data:`CSV_COLUMNS`."""
        c = self.channels
        return [self.omega_eff / TWO_PI] + [c.get(k, float("nan")) for k in CSV_COLUMNS[1:-1]] \
            + [self.total_fidelity]


CSV_COLUMNS = ("omega_eff_MHz", "E_p", "E_r", "E_dop", "E_th", "E_st", "E_noise", "E_spatial",
               "total_fidelity")


def _wavenumber(drive):
    k1, k2 = TWO_PI / drive.lambda1, TWO_PI / drive.lambda2
    return k1 - k2 if drive.counter_propagating else k1 + k2


def doppler_width(temperature, drive, mass=RB87_MASS):
    """1/e half-width (rad/us) of the two-photon Doppler distribution.

    ``sqrt(2 k T / m) |k_eff|`` with ``k_eff = k1 - k2`` for
    counter-propagating beams and ``k1 + k2`` otherwise.
    """
    if not temperature > 0:
        raise ContractViolation("temperature must be positive")
    v = math.sqrt(2 * KB * temperature / mass)  # m/s == um/us
    return v * abs(_wavenumber(drive))


def _reference(drive, pulse, V, rel_tol):
    amps = run_gate(drive.lossless(), pulse, V, rel_tol=rel_tol, output_points=2)
    return amps, gate_fidelity(amps)


def _interaction(pulse, V):
    return BLOCKADE_FACTOR * pulse.omega_eff if V is None else V


def _symmetric_average(nodes, weights, evaluate):
    """``sum_ij w_i w_j f(x_i, x_j)`` for symmetric ``f``, visiting i <= j only."""
    total = 0.0
    n = len(nodes)
    for i in range(n):
        for j in range(i, n):
            mult = 1.0 if i == j else 2.0
            total += mult * weights[i] * weights[j] * evaluate(nodes[i], nodes[j])
    return total


def doppler_averaged_infidelity(drive, pulse, temperature=None, quadrature_order=20, mass=RB87_MASS,
                                V=None, width=None, rel_tol=QUAD_REL_TOL):
    """``1 - <F>`` over independent Gaussian Doppler shifts of both atoms.

    Parameters
    ----------
    drive : DriveParams
        Decay rates are ignored; the run is lossless.
    pulse : PulseShape
        Usually an optimised pulse.
    temperature : float
        Kelvin.  Ignored when ``width`` (rad/us) is given directly.
    quadrature_order : int
        Gauss-Hermite nodes per atom.
    V : float, optional
        Pair interaction (rad/us); defaults to a deep blockade.

    Notes
    -----
    The single-qubit phase compensation is calibrated once on the
    Doppler-free gate and then applied to every velocity class.
    """
    if quadrature_order < 3:
        raise ContractViolation("quadrature_order must be >= 3")
    if width is None:
        width = doppler_width(temperature, drive, mass)
    if width < 0:
        raise ContractViolation("Doppler width must be >= 0")
    V = _interaction(pulse, V)
    lossless = drive.lossless()
    ref, f0 = _reference(drive, pulse, V, rel_tol)
    if width == 0:
        return 1.0 - f0
    phi = ref["01"].phase
    x, w = special.roots_hermite(quadrature_order)
    w = w / math.sqrt(math.pi)

    def fid(xa, xb):
        amps = run_gate(lossless, pulse, V, doppler=(width * xa, width * xb), rel_tol=rel_tol,
                        output_points=2)
        return gate_fidelity(amps, phi, phi)

    return 1.0 - _symmetric_average(x, w, fid)


def decay_infidelity(drive, pulse, which, V=None, rel_tol=1e-9):
    """Excess infidelity from one decay channel.

    ``which`` is ``"intermediate"`` (only gamma_p on) or ``"rydberg"`` (only
    gamma_r on).  The compensation phases are those of the lossless gate.
    """
    if which == "intermediate":
        d = replace(drive, gamma_r=0.0)
        gamma = drive.gamma_p
    elif which == "rydberg":
        d = replace(drive, gamma_p=0.0)
        gamma = drive.gamma_r
    else:
        raise ContractViolation(f"unknown decay channel {which!r}")
    if gamma == 0:
        return 0.0
    V = _interaction(pulse, V)
    ref, f0 = _reference(drive, pulse, V, rel_tol)
    phi = ref["01"].phase
    amps = run_gate(d, pulse, V, with_decay=True, rel_tol=rel_tol, output_points=2)
    return float(min(1.0, max(0.0, f0 - gate_fidelity(amps, phi, phi))))


def thermal_coherence(t, spinwave_wavelength, profile_width, speed):
    """Spin-wave coherence ``eta_th(t)`` under ballistic thermal motion.

    ``eta = exp(-(t/tau)^2 / (1 + (t/xi)^2)) / (1 + (t/xi)^2)^2`` with
    ``tau = Lambda / (2 pi v)`` and ``xi = w / v``.
    """
    if spinwave_wavelength <= 0 or profile_width <= 0 or speed <= 0:
        raise ContractViolation("wavelength, width and speed must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ContractViolation("time must be >= 0")
    tau = spinwave_wavelength / (TWO_PI * speed)
    xi = profile_width / speed
    q = 1.0 + (t / xi) ** 2
    out = np.exp(-(t / tau) ** 2 / q) / q ** 2
    return float(out) if out.ndim == 0 else out


def thermal_infidelity(amps, spinwave_wavelength, profile_width, speed):
    """Average over the four inputs of ``1 - eta_th(t_r)``.

    ``t_r`` is the time-integrated Rydberg population of each input, i.e.
    only the window in which the excitation sits in the Rydberg spin wave
    is exposed to the short-wavelength dephasing.
    """
    losses = [1.0 - thermal_coherence(amps[c].rydberg_time, spinwave_wavelength, profile_width,
                                      speed) for c in CONFIGS]
    return float(np.mean(losses))


def optical_depth(ens, R_b):
    od = 4.0 / 3.0 * ens.density * R_b * ens.storage_wavelength ** 2
    if ens.cavity_finesse is not None:
        od *= ens.cavity_finesse / math.pi
    return od


def storage_infidelity(ens, R_b):
    """``1 - eta^k`` with ``eta = 1 - 1/OD`` and ``OD = 4/3 rho R_b Lambda^2``.

    ``k = ens.storage_exponent``; a cavity multiplies OD by ``F/pi``.
    """
    if R_b <= 0:
        raise ContractViolation("R_b must be positive")
    od = optical_depth(ens, R_b)
    if od <= 1:
        raise OutOfRegime(f"optical depth {od:.3g} <= 1: storage formula not applicable")
    eta = 1.0 - 1.0 / od
    return 1.0 - eta ** ens.storage_exponent


def intensity_noise_infidelity(rel_rms_1, rel_rms_2):
    """``pi^2 (dI1/2I1 + dI2/2I2)^2`` for a 2pi rotation."""
    if rel_rms_1 < 0 or rel_rms_2 < 0:
        raise ContractViolation("relative RMS noise must be >= 0")
    return math.pi ** 2 * (0.5 * rel_rms_1 + 0.5 * rel_rms_2) ** 2


@dataclass(frozen=True)
class TransverseProfile:
    """Intensity profile ``exp(-2 (rho/width)^order)``; ``width=inf`` is flat."""

    width: float
    order: int = 2

    def __post_init__(self):
        if not self.width > 0:
            raise ContractViolation("profile width must be > 0")
        if self.order < 2 or self.order % 2:
            raise ContractViolation("profile order must be an even integer >= 2")

    @property
    def flat(self):
        return math.isinf(self.width)

    def intensity(self, rho):
        if self.flat:
            return np.ones_like(np.asarray(rho, dtype=float))
        return np.exp(-2.0 * (np.asarray(rho, dtype=float) / self.width) ** self.order)

    def radial_nodes(self, n, smooth_order=None):
        """Radii and weights averaging over the 2-D density ``intensity(rho) d^2 rho``.

        With ``u = 2 (rho/w)^p`` the radial measure becomes
        ``u^(2/p - 1) e^-u du`` (generalized Gauss-Laguerre).  That rule is
        accurate for integrands smooth in ``u``, e.g. functions of
        ``rho^smooth_order`` when ``smooth_order`` is a multiple of ``p``.
        Otherwise Gauss-Legendre in ``rho`` over the support is used, since
        the substitution makes smooth functions of ``rho`` singular in ``u``.
        """
        if self.flat:
            raise ContractViolation("a flat profile has no normalisable density")
        p = self.order
        if smooth_order is None or smooth_order % p == 0:
            u, w = special.roots_genlaguerre(n, 2.0 / p - 1.0)
            return self.width * (u / 2.0) ** (1.0 / p), w / w.sum()
        x, wx = special.roots_legendre(n)
        edge = self.width * 20.0 ** (1.0 / p)  # exp(-40) beyond
        rho = 0.5 * edge * (x + 1)
        w = wx * rho * self.intensity(rho)
        return rho, w / w.sum()


def spatial_inhomogeneity_infidelity(laser_profile, photon_profile, drive, pulse,
                                     quadrature_order=20, V=None, rel_tol=QUAD_REL_TOL):
    """``1 - <F>`` with locally rescaled drive across the photons' cross-section.

    Both excitation beams share ``laser_profile``, so the ratio
    ``omega1/omega2`` is unchanged while ``omega_eff`` scales with the local
    intensity ``I(rho)/I(0)``.  The two stored excitations sit at
    independent radii drawn from ``photon_profile``; compensation phases
    are calibrated at the beam centre.
    """
    if quadrature_order < 3:
        raise ContractViolation("quadrature_order must be >= 3")
    V = _interaction(pulse, V)
    lossless = drive.lossless()
    ref, f0 = _reference(drive, pulse, V, rel_tol)
    if laser_profile.flat:
        return 0.0
    phi = ref["01"].phase
    rho, w = photon_profile.radial_nodes(quadrature_order, laser_profile.order)
    scale = laser_profile.intensity(rho)
    pulses = [replace(pulse, omega_eff=pulse.omega_eff * s) for s in scale]

    def fid(i, j):
        if scale[i] == 1.0 and scale[j] == 1.0:
            return f0
        amps = run_gate(lossless, pulses[i], V, rel_tol=rel_tol, output_points=2,
                        pulse_b=pulses[j])
        return gate_fidelity(amps, phi, phi)

    idx = np.arange(quadrature_order)
    return float(max(0.0, f0 - _symmetric_average(idx, w, fid)))


def budget_point(drive, pulse, ens, C6=DEFAULT_C6, noise=(1e-3, 1e-3), spatial=None,
                 blockade=None, quadrature_order=20, V=None):
    """Evaluate every channel at one gate speed.

    Parameters
    ----------
    spatial : (TransverseProfile, TransverseProfile) in units of R_b, optional
        Laser and photon profiles; widths are multiplied by R_b.  ``None``
        uses super-Gaussian profiles of half-widths 1.3 and 0.8 R_b.
    blockade : callable, optional
        ``blockade(drive, pulse, R_b) -> infidelity``; omitted when None.
    """
    oe = pulse.omega_eff
    R_b = blockade_radius(C6, oe)
    V = _interaction(pulse, V)
    ch, flags, extras = {}, [], {"R_b_um": R_b}

    def attempt(name, fn):
        try:
            ch[name] = float(min(1.0, max(0.0, fn())))
        except (OutOfRegime, IntegrationFailure, ContractViolation) as exc:
            log.warning("channel %s flagged at omega_eff=%g: %s", name, oe, exc)
            flags.append(f"{name}: {exc}")

    ref, f0 = _reference(drive, pulse, V, 1e-9)
    extras["intrinsic_infidelity"] = 1.0 - f0
    attempt("E_p", lambda: decay_infidelity(drive, pulse, "intermediate", V))
    attempt("E_r", lambda: decay_infidelity(drive, pulse, "rydberg", V))
    attempt("E_dop", lambda: doppler_averaged_infidelity(
        drive, pulse, ens.temperature, quadrature_order, ens.atomic_mass, V) - (1.0 - f0))
    v = thermal_speed(ens.temperature, ens.atomic_mass)
    lam_r = ens.rydberg_wavelength(drive)
    amps = run_gate(drive.lossless(), pulse, V, rel_tol=1e-9, output_points=401)
    attempt("E_th", lambda: thermal_infidelity(amps, lam_r, R_b, v))
    extras["E_th_ground"] = thermal_infidelity(amps, ens.ground_spinwave_wavelength, R_b, v)
    extras["rydberg_spinwave_wavelength_um"] = lam_r
    attempt("E_st", lambda: storage_infidelity(ens, R_b))
    attempt("E_noise", lambda: intensity_noise_infidelity(*noise))
    if spatial is None:
        spatial = (TransverseProfile(1.3, 10), TransverseProfile(0.8, 10))
    laser, photon = (replace(p, width=p.width * R_b) for p in spatial)
    attempt("E_spatial", lambda: spatial_inhomogeneity_infidelity(
        laser, photon, drive, pulse, quadrature_order, V))
    if blockade is not None:
        attempt("E_blockade", lambda: blockade(drive, pulse, R_b))
    total = float(np.prod([1.0 - e for e in ch.values()]))
    return ErrorBudget(oe, R_b, ch, total, flags, extras)


def budget_sweep(delta_over_omega_eff, ens, omega_eff_grid, C6=DEFAULT_C6, pulse_units=None,
                 drive_kw=None, workers=1, ramp=0.0, **kw):
    """Budget at each gate speed of ``omega_eff_grid`` (rad/us).

    ``pulse_units`` is the optimised pulse ``(ratio_peak, width, t_gate,
    ratio_base)`` in units of ``1/omega_eff``, with edge ramp ``ramp`` in
    the same units; the detuning scales with the gate speed so
    ``delta/omega_eff`` stays fixed.
    """
    grid = list(omega_eff_grid)
    if not grid:
        raise ContractViolation("omega_eff grid must not be empty")
    if pulse_units is None:
        raise ContractViolation("pulse_units (optimised pulse) is required")
    drive_kw = dict(drive_kw or {})

    def point(oe):
        drive = DriveParams.for_ratio(oe, delta_over_omega_eff, **drive_kw)
        pulse = PulseShape.dimensionless(oe, *pulse_units, ramp=ramp)
        return budget_point(drive, pulse, ens, C6, **kw)

    if workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, grid))
    return [point(oe) for oe in grid]
