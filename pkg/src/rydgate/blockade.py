"""Imperfect blockade for localized pairs and overlapping spin waves.

Both stored excitations share one density profile ``|C1(x)|^2``; the
separation of the two excited atoms is then distributed as the
autocorrelation of that profile.  With the same scaling to the blockade
radius in every direction the gate only depends on the scaled distance
``u = |(x_par / Rb_par, x_perp / Rb_perp)|``, so the average over
separations reduces to a radial quadrature in ``u`` whose weights come
from an angular integral of the autocorrelation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .dynamics import ContractViolation
from .gate import (CONFIGS, CZ, GateMatrix, compensate_single_qubit_phase, fidelity,
                   run_pair, run_single, rr_population)

log = logging.getLogger(__name__)

BLOCKADE_CAP = 1e6  # V is capped at this multiple of omega_eff (u -> 0)
MIN_RADIAL, MIN_ANGULAR = 16, 4
_EDGE = 1.5  # super-Gaussian support in widths (exp(-2*1.5^10) ~ 1e-50)

_ORDERS = {"gaussian": 2, "super_gaussian_10": 10}


@dataclass(frozen=True)
class SpinWaveProfile:
    """Separable excitation density ``exp(-2|x_par/w_par|^p) exp(-2 (rho/w_perp)^p)``.

    ``p = 2`` for ``"gaussian"`` and 10 for ``"super_gaussian_10"``.  The
    diameter is ``D = 2 w``.
    """

    shape: str
    w_par: float
    w_perp: float

    def __post_init__(self):
        if self.shape not in _ORDERS:
            raise ContractViolation(f"unknown profile shape {self.shape!r}")
        if not (self.w_par > 0 and self.w_perp > 0):
            raise ContractViolation("profile widths must be > 0")

    @classmethod
    def from_diameter(cls, shape, d_over_rb, rb_par, rb_perp=None):
        """Profile with ``D/R_b`` equal along and across the lasers."""
        rb_perp = rb_par if rb_perp is None else rb_perp
        return cls(shape, 0.5 * d_over_rb * rb_par, 0.5 * d_over_rb * rb_perp)

    @property
    def order(self):
        return _ORDERS[self.shape]

    @property
    def normalization(self):
        """``int |C1|^2 d^3x`` of the unnormalised density (um^3)."""
        p = self.order
        long = 2.0 * self.w_par * math.gamma(1 + 1 / p) / 2 ** (1 / p)
        trans = 2.0 * math.pi * self.w_perp ** 2 * math.gamma(2 / p) / (p * 2 ** (2 / p))
        return long * trans

    def density(self, x_par, rho):
        """Normalised density at longitudinal ``x_par`` and transverse radius ``rho``."""
        p = self.order
        x_par = np.asarray(x_par, dtype=float)
        rho = np.asarray(rho, dtype=float)
        return np.exp(-2 * np.abs(x_par / self.w_par) ** p - 2 * (rho / self.w_perp) ** p) \
            / self.normalization


@dataclass(frozen=True)
class InteractionModel:
    """van der Waals pair shift.

    ``isotropic``: ``V = C6 / |x|^6``.  ``normalized_anisotropic``:
    ``V = omega_eff / u^6`` with ``u^2 = (x_par/Rb_par)^2 + (x_perp/Rb_perp)^2``
    and ``omega_eff = C6 / Rb_perp^6``.
    """

    C6: float
    Rb_par: float
    Rb_perp: float
    mode: str = "normalized_anisotropic"

    def __post_init__(self):
        if not (self.C6 > 0 and self.Rb_par > 0 and self.Rb_perp > 0):
            raise ContractViolation("C6 and blockade radii must be positive")
        if self.mode not in ("isotropic", "normalized_anisotropic"):
            raise ContractViolation(f"unknown interaction mode {self.mode!r}")

    @classmethod
    def for_pulse(cls, omega_eff, R_b, anisotropy=1.0, mode="normalized_anisotropic"):
        """Model whose blockade radius (transverse) is ``R_b`` at ``omega_eff``."""
        return cls(omega_eff * R_b ** 6, R_b * anisotropy, R_b, mode)

    @property
    def omega_eff(self):
        return self.C6 / self.Rb_perp ** 6

    def scaled_distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.mode == "isotropic":
            return np.linalg.norm(x, axis=-1) / self.Rb_perp
        return np.sqrt((x[..., 0] / self.Rb_par) ** 2
                       + (x[..., 1] ** 2 + x[..., 2] ** 2) / self.Rb_perp ** 2)


def vdw_interaction(x_ij, model):
    """Pair shift (rad/us) at separation ``x_ij = (x_par, x_perp1, x_perp2)`` in um."""
    x = np.asarray(x_ij, dtype=float)
    if x.shape[-1] != 3:
        raise ContractViolation("separation must be a 3-vector")
    if model.mode == "isotropic":
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise ContractViolation("zero separation: interaction is singular")
        return model.C6 / r ** 6
    u = model.scaled_distance(x)
    if np.any(u == 0):
        raise ContractViolation("zero separation: interaction is singular")
    return model.omega_eff / u ** 6


def _capped(omega_eff, u):
    return omega_eff * min(BLOCKADE_CAP, u ** -6.0)


def _compensated_gate(amp01, amp11):
    amps = {"00": 1.0 + 0j, "01": amp01, "10": amp01, "11": amp11}
    G = GateMatrix.diag([amps[c] for c in CONFIGS])
    return compensate_single_qubit_phase(G, float(np.angle(amp01)))


def pair_infidelity(D_over_Rb, drive, pulse, rel_tol=1e-9):
    """Compensated CZ infidelity of two atoms at ``D/R_b`` (V = omega_eff (R_b/D)^6)."""
    if not D_over_Rb > 0:
        raise ContractViolation("D/R_b must be > 0")
    lossless = drive.lossless()
    a01 = run_single(lossless, pulse, rel_tol=rel_tol, output_points=2).return_amplitude
    V = _capped(pulse.omega_eff, D_over_Rb)
    a11 = run_pair(lossless, pulse, V, rel_tol=rel_tol, output_points=2).return_amplitude
    return 1.0 - fidelity(_compensated_gate(a01, a11), CZ)


@dataclass(frozen=True)
class Sampler:
    """Separation quadrature: Gauss-Legendre radial x angular nodes.

    ``method="montecarlo"`` draws ``samples`` seeded separations instead
    and interpolates the gate response between the radial nodes.
    """

    radial: int = 64
    angular: int = 16
    method: str = "quadrature"
    samples: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("quadrature", "montecarlo"):
            raise ContractViolation(f"unknown sampler method {self.method!r}")
        if self.radial < 2 or self.angular < 1 or self.samples < 1:
            raise ContractViolation("sampler sizes must be positive")

    def refined(self):
        return Sampler(2 * self.radial, 2 * self.angular, self.method, 2 * self.samples, self.seed)


@dataclass
class SpinWaveResult:
    infidelity: float
    weight_sum: float  # raw quadrature mass of the separation density
    warnings: list = field(default_factory=list)
    nodes: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)

    def __float__(self):
        return float(self.infidelity)


def _autocorr_1d(order, w, s):
    """Autocorrelation of the normalised 1-D profile ``exp(-2|x/w|^p)``."""
    s = np.abs(np.asarray(s, dtype=float))
    if order == 2:
        return np.exp(-s ** 2 / w ** 2) / (w * math.sqrt(math.pi))
    edge = _EDGE * w
    x, wx = special.roots_legendre(400)
    x = edge * x
    wx = edge * wx
    f = np.exp(-2 * np.abs(x / w) ** order)
    f /= wx @ f
    grid = np.linspace(0.0, 2 * edge, 801)
    g = np.exp(-2 * np.abs((x[None, :] + grid[:, None]) / w) ** order)
    table = (g * (f * wx)[None, :]).sum(axis=1) / (wx @ np.exp(-2 * np.abs(x / w) ** order))
    # spline undershoot near the support edge would give tiny negative densities
    return np.where(s < grid[-1], np.maximum(CubicSpline(grid, table)(np.minimum(s, grid[-1])), 0.0),
                    0.0)


def _autocorr_2d(order, w, q):
    """Autocorrelation of the normalised radial profile ``exp(-2 (rho/w)^p)`` in 2-D."""
    q = np.abs(np.asarray(q, dtype=float))
    if order == 2:
        return np.exp(-q ** 2 / w ** 2) / (math.pi * w ** 2)
    edge = _EDGE * w
    r, wr = special.roots_legendre(240)
    r = 0.5 * edge * (r + 1)
    wr = 0.5 * edge * wr
    phi, wphi = special.roots_legendre(240)
    phi = 0.5 * math.pi * (phi + 1)
    wphi = math.pi * wphi  # [0, pi] doubled by mirror symmetry
    g = np.exp(-2 * (r / w) ** order)
    norm = 2 * math.pi * (wr @ (r * g))
    grid = np.linspace(0.0, 2 * edge, 401)
    rr = r[:, None]
    cos = np.cos(phi)[None, :]
    table = np.empty(grid.size)
    for k, qk in enumerate(grid):
        d = np.sqrt(np.maximum(rr ** 2 + qk ** 2 - 2 * rr * qk * cos, 0.0))
        inner = np.exp(-2 * (d / w) ** order) @ wphi
        table[k] = (wr * r * g) @ inner
    spline = CubicSpline(grid, table / norm ** 2)
    return np.where(q < grid[-1], np.maximum(spline(np.minimum(q, grid[-1])), 0.0), 0.0)


def separation_quadrature(profile, model, sampler=Sampler()):
    """Nodes ``u`` (scaled distance) and weights of the pair-separation density.

    Returns ``(u, weights, raw_sum)``; weights are renormalised to 1 and
    ``raw_sum`` is the quadrature mass before renormalisation.
    """
    p = profile.order
    # scaled widths: in units of the blockade radii the profile is isotropic in scale
    a_par = profile.w_par / model.Rb_par
    a_perp = profile.w_perp / model.Rb_perp
    if model.mode == "isotropic":
        a_par = profile.w_par / model.Rb_perp
    umax = (5.0 if p == 2 else 2 * _EDGE * math.sqrt(2.0)) * max(a_par, a_perp)
    x, wx = special.roots_legendre(sampler.radial)
    u = 0.5 * umax * (x + 1)
    wu = 0.5 * umax * wx
    c, wc = special.roots_legendre(sampler.angular)
    c = 0.5 * (c + 1)  # cos(theta) in [0, 1], doubled by symmetry
    wc = 0.5 * wc
    s_par = np.outer(u, c)
    s_perp = np.outer(u, np.sqrt(1 - c ** 2))
    dens = _autocorr_1d(p, a_par, s_par) * _autocorr_2d(p, a_perp, s_perp)
    # d^3s = 2 pi u^2 du dcos, over cos in [-1, 1]
    weights = 4 * math.pi * u ** 2 * wu * (dens @ wc)
    raw = float(weights.sum())
    return u, weights / raw, raw


def _gate_response(drive, pulse, u, rel_tol, want_phase=False, output_points=2001):
    lossless = drive.lossless()
    a01 = run_single(lossless, pulse, rel_tol=rel_tol, output_points=2).return_amplitude
    a11, phases = [], []
    for uk in u:
        V = _capped(pulse.omega_eff, uk)
        amp = run_pair(lossless, pulse, V, rel_tol=rel_tol,
                       output_points=output_points if want_phase else 2)
        a11.append(amp.return_amplitude)
        if want_phase:
            traj = amp.trajectory
            phases.append(V * float(np.trapezoid(rr_population(amp), traj.times)))
    return a01, np.array(a11), np.array(phases)


def _resolution_warnings(sampler, raw):
    out = []
    if sampler.radial < MIN_RADIAL or sampler.angular < MIN_ANGULAR:
        out.append(f"under-resolved sampler ({sampler.radial}x{sampler.angular}); "
                   f"minimum is {MIN_RADIAL}x{MIN_ANGULAR}")
    if abs(raw - 1) > 1e-3:
        out.append(f"separation density integrates to {raw:.6f}, not 1")
    return out


def _mc_separations(profile, model, sampler):
    rng = np.random.default_rng(sampler.seed)
    p = profile.order

    def draw(n):
        if p == 2:  # exp(-2 x^2) is a normal density with sigma = 1/2
            return rng.normal(0.0, 0.5, size=(n, 3)) * np.array(
                [profile.w_par, profile.w_perp, profile.w_perp])
        # rejection sampling inside the box [-1.6w, 1.6w]^3
        pts = []
        while sum(len(q) for q in pts) < n:
            cand = rng.uniform(-1.6, 1.6, size=(4 * n, 3))
            keep = rng.uniform(size=4 * n) < np.exp(-2 * np.abs(cand[:, 0]) ** p
                                                    - 2 * np.hypot(cand[:, 1], cand[:, 2]) ** p)
            pts.append(cand[keep])
        return np.concatenate(pts)[:n] * np.array([profile.w_par, profile.w_perp, profile.w_perp])

    sep = draw(sampler.samples) - draw(sampler.samples)
    return model.scaled_distance(sep)


def spinwave_infidelity(profile, model, drive, pulse, sampler=Sampler(), average="matrix",
                        rel_tol=1e-8):
    """Gate error of two overlapping spin waves with imperfect blockade.

    ``average="matrix"`` averages the compensated gate matrix over the pair
    separations and applies the fidelity once; ``"fidelity"`` averages the
    per-separation fidelities instead.
    """
    if average not in ("matrix", "fidelity"):
        raise ContractViolation("average must be 'matrix' or 'fidelity'")
    u, w, raw = separation_quadrature(profile, model, sampler)
    warnings = _resolution_warnings(sampler, raw)
    a01, a11, _ = _gate_response(drive, pulse, u, rel_tol)
    if sampler.method == "montecarlo":
        us = _mc_separations(profile, model, sampler)
        a11 = np.interp(us, u, a11.real) + 1j * np.interp(us, u, a11.imag)
        w = np.full(us.size, 1.0 / us.size)
    mats = np.array([_compensated_gate(a01, a).entries for a in a11])
    if average == "matrix":
        M = GateMatrix(np.tensordot(w, mats, axes=1))
        value = 1.0 - fidelity(M, CZ)
    else:
        value = 1.0 - float(np.dot(w, [fidelity(m, CZ.entries) for m in mats]))
    for msg in warnings:
        log.warning(msg)
    return SpinWaveResult(float(value), raw, warnings, u, w)


def inhomogeneous_phase_error(phases, weights):
    """``1 - |sum_k w_k exp(-i phi_k)|^2`` for normalised pair weights."""
    w = np.asarray(weights, dtype=float)
    return float(max(0.0, 1.0 - abs(np.sum(w * np.exp(-1j * np.asarray(phases)))) ** 2))


def leakage_phase_error(profile, model, drive, pulse, sampler=Sampler(), rel_tol=1e-8,
                        output_points=2001):
    """Interaction-induced inhomogeneous phase error, averaged over the four inputs.

    ``phi(u) = V(u) int P_rr dt`` on each separation; only input ``11``
    picks up the error, so the returned value is a quarter of its
    ``1 - |<exp(-i phi)>|^2``.
    """
    u, w, raw = separation_quadrature(profile, model, sampler)
    _, _, phases = _gate_response(drive, pulse, u, rel_tol, want_phase=True,
                                  output_points=output_points)
    if sampler.method == "montecarlo":
        us = _mc_separations(profile, model, sampler)
        phases = np.interp(us, u, phases)
        w = np.full(us.size, 1.0 / us.size)
    return 0.25 * inhomogeneous_phase_error(phases, w)
