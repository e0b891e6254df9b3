"""Two-photon Rydberg CZ gate: Hamiltonians, protocol runs and fidelity.

Single atom basis is ``(|1>, |p>, |r>)``; the pair basis is the tensor
product ordered as ``3*a + b`` for atom a in level ``a`` and atom b in level
``b``.  The qubit level ``|0>`` is never coupled, so configuration ``00``
returns with amplitude 1 and ``01``/``10`` reduce to single-atom runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .dynamics import (ContractViolation, HamiltonianProvider, IntegrationFailure,
                       StateVector, TimeGrid, Trajectory, apply_phenomenological_decay,
                       integrate_populations, propagate)
from .units import lifetime_to_rate

CONFIGS = ("00", "01", "10", "11")
SINGLE_LABELS = ("1", "p", "r")
PAIR_LABELS = tuple(a + b for a in SINGLE_LABELS for b in SINGLE_LABELS)
RR = PAIR_LABELS.index("rr")
PAIR_RYDBERG = tuple(k for k, lab in enumerate(PAIR_LABELS) if "r" in lab)
PAIR_P = tuple(k for k, lab in enumerate(PAIR_LABELS) if "p" in lab)

DEFAULT_GAMMA_P = lifetime_to_rate(0.129)
DEFAULT_GAMMA_R = lifetime_to_rate(343.0)


@dataclass(frozen=True)
class DriveParams:
    """Two-photon excitation settings.

    ``omega1_peak``/``omega2_peak`` are optional hardware ceilings (rad/us);
    when set, a pulse whose Rabi frequencies exceed them is rejected.
    """

    delta: float
    omega1_peak: float | None = None
    omega2_peak: float | None = None
    lambda1: float = 0.4217
    lambda2: float = 1.006
    gamma_p: float = DEFAULT_GAMMA_P
    gamma_r: float = DEFAULT_GAMMA_R
    counter_propagating: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractViolation("delta must be positive (red detuning)")
        for name in ("omega1_peak", "omega2_peak"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ContractViolation(f"{name} must be >= 0")
        if self.gamma_p < 0 or self.gamma_r < 0:
            raise ContractViolation("decay rates must be >= 0")

    @classmethod
    def for_ratio(cls, omega_eff, delta_over_omega_eff, **kw):
        return cls(delta=omega_eff * delta_over_omega_eff, **kw)

    def lossless(self):
        return replace(self, gamma_p=0.0, gamma_r=0.0)


@dataclass(frozen=True)
class PulseShape:
    """Intensity-ratio profile with constant effective Rabi frequency.

    The ratio ``r(t) = omega1/omega2`` is either constant (``ratio_peak``) or
    a Gaussian bump ``g(t) = exp(-2 (t - t_center)^2 / width^2)`` on a floor,
    ``r(t) = ratio_base (1 - g(t)) + ratio_peak g(t)``.
    With ``omega1*omega2 = 2*delta*omega_eff`` held pointwise this gives
    ``omega1 = sqrt(2 delta omega_eff r)`` and ``omega2 = sqrt(2 delta omega_eff / r)``.

    Both lasers share an amplitude envelope ``e(t)`` that rises as ``sin^2``
    over ``ramp_time`` after ``t = 0`` and falls symmetrically before
    ``t_gate`` (``e = 1`` when ``ramp_time = 0``).  The effective Rabi
    frequency is ``omega_eff e(t)^2``, constant outside the two ramps.  A
    smooth switch keeps the far-detuned intermediate state adiabatically
    empty; an abrupt one leaves an admixture ``~ omega1 / (2 delta)`` at
    each edge.
    """

    family: str = "gaussian_ratio"
    omega_eff: float = 1.0
    ratio_peak: float = 1.0
    width: float = 2.5
    t_center: float | None = None
    t_gate: float = 7.7
    ratio_base: float = 0.0
    ramp_time: float = 0.0

    def __post_init__(self):
        if self.family not in ("constant", "gaussian_ratio"):
            raise ContractViolation(f"unknown pulse family {self.family!r}")
        if self.omega_eff < 0:
            raise ContractViolation("omega_eff must be >= 0")
        if self.t_gate < 0:
            raise ContractViolation("t_gate must be >= 0")
        if self.ratio_peak <= 0:
            raise ContractViolation("ratio_peak must be > 0")
        if self.family == "gaussian_ratio":
            if self.width <= 0:
                raise ContractViolation("width must be > 0")
            if self.ratio_base < 0:
                raise ContractViolation("ratio_base must be >= 0")
        if self.ramp_time < 0 or 2 * self.ramp_time > self.t_gate:
            raise ContractViolation("ramp_time must lie in [0, t_gate/2]")
        if self.t_center is None:
            object.__setattr__(self, "t_center", 0.5 * self.t_gate)

    @classmethod
    def dimensionless(cls, omega_eff, ratio_peak, width, t_gate, ratio_base=0.0,
                      family="gaussian_ratio", t_center=None, ramp=0.0):
        """Build from times given in units of ``1/omega_eff``."""
        return cls(family=family, omega_eff=omega_eff, ratio_peak=ratio_peak,
                   width=width / omega_eff, t_gate=t_gate / omega_eff,
                   t_center=None if t_center is None else t_center / omega_eff,
                   ratio_base=ratio_base, ramp_time=ramp / omega_eff)

    def in_units(self):
        """``(ratio_peak, width, t_gate, ratio_base)`` with times in 1/omega_eff."""
        return (self.ratio_peak, self.width * self.omega_eff,
                self.t_gate * self.omega_eff, self.ratio_base)

    def ratio(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            return np.full_like(t, self.ratio_peak)
        g = np.exp(-2.0 * (t - self.t_center) ** 2 / self.width ** 2)
        return self.ratio_base * (1.0 - g) + self.ratio_peak * g

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.ramp_time == 0:
            return np.ones_like(t)
        edge = np.clip(np.minimum(t, self.t_gate - t) / self.ramp_time, 0.0, 1.0)
        return np.sin(0.5 * np.pi * edge) ** 2

    def rabi(self, t, delta):
        """``(omega1(t), omega2(t))`` in rad/us."""
        r = self.ratio(t)
        if np.any(r <= 0):
            raise ContractViolation("ratio profile underflows to zero inside the gate window")
        prod = 2.0 * delta * self.omega_eff
        e = self.envelope(t)
        return e * np.sqrt(prod * r), e * np.sqrt(prod / r)

    def omega_eff_at(self, t):
        """Effective Rabi frequency ``omega_eff e(t)^2`` (rad/us)."""
        return self.omega_eff * self.envelope(t) ** 2

    @property
    def is_static(self):
        """Drive independent of time (constant ratio, no ramp)."""
        return self.family == "constant" and self.ramp_time == 0

    def breakpoints(self):
        """Ends of the edge ramps, where the drive changes character."""
        if self.ramp_time == 0:
            return ()
        return (self.ramp_time, self.t_gate - self.ramp_time)

    def check_reachable(self, drive):
        if self.t_gate == 0:
            return
        t = np.linspace(0.0, self.t_gate, 513)
        o1, o2 = self.rabi(t, drive.delta)
        tol = 1 + 1e-9
        if drive.omega1_peak is not None and o1.max() > drive.omega1_peak * tol:
            raise ContractViolation(f"pulse needs omega1 = {o1.max():.4g} > omega1_peak")
        if drive.omega2_peak is not None and o2.max() > drive.omega2_peak * tol:
            raise ContractViolation(f"pulse needs omega2 = {o2.max():.4g} > omega2_peak")


@dataclass(frozen=True)
class ConfigAmplitude:
    config: str
    return_amplitude: complex
    max_rydberg_population: float = 0.0
    max_p_population: float = 0.0
    rydberg_time: float = 0.0  # time-integrated Rydberg population, us
    p_time: float = 0.0
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def phase(self):
        return float(np.angle(self.return_amplitude))


@dataclass(frozen=True)
class GateMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise ContractViolation("gate matrix must be 4x4")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def diagonal(self):
        return np.diag(self.entries).copy()

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=complex)))


CZ = GateMatrix.diag([1, -1, -1, -1])
IDENTITY = GateMatrix.diag([1, 1, 1, 1])


def _single_batch(drive, pulse, doppler_shift):
    def batch(t):
        t = np.asarray(t, dtype=float)
        o1, o2 = pulse.rabi(t, drive.delta)
        h = np.zeros((t.size, 3, 3), dtype=complex)
        h[:, 0, 1] = h[:, 1, 0] = 0.5 * o1
        h[:, 1, 2] = h[:, 2, 1] = 0.5 * o2
        h[:, 1, 1] = drive.delta
        h[:, 2, 2] = doppler_shift
        return h
    return batch


def build_single_hamiltonian(drive, pulse, doppler_shift=0.0):
    """3x3 ladder Hamiltonian over ``(|1>, |p>, |r>)``."""
    pulse.check_reachable(drive)
    return HamiltonianProvider(_single_batch(drive, pulse, doppler_shift), 3,
                               hermitian=True, constant=pulse.is_static,
                               labels=SINGLE_LABELS)


def build_pair_hamiltonian(drive, pulse, V, doppler_shifts=(0.0, 0.0), pulse_b=None):
    """9x9 two-atom Hamiltonian with interaction ``V`` on ``|rr>``.

    ``pulse_b`` gives atom b its own (locally rescaled) pulse; by default both
    atoms see ``pulse``.
    """
    if not np.isfinite(V):
        raise ContractViolation("interaction must be finite")
    pulse_b = pulse if pulse_b is None else pulse_b
    pulse.check_reachable(drive)
    pulse_b.check_reachable(drive)
    ha = _single_batch(drive, pulse, doppler_shifts[0])
    hb = _single_batch(drive, pulse_b, doppler_shifts[1])
    eye = np.eye(3)

    def batch(t):
        a, b = ha(t), hb(t)
        h = (np.einsum("nij,kl->nikjl", a, eye) + np.einsum("ij,nkl->nikjl", eye, b))
        h = h.reshape(-1, 9, 9)
        h[:, RR, RR] += V
        return h

    return HamiltonianProvider(batch, 9, hermitian=True,
                               constant=pulse.is_static, labels=PAIR_LABELS)


def single_decay_terms(drive):
    return [(1, drive.gamma_p), (2, drive.gamma_r)]


def pair_decay_terms(drive):
    terms = []
    for k, lab in enumerate(PAIR_LABELS):
        for ch in lab:
            if ch == "p":
                terms.append((k, drive.gamma_p))
            elif ch == "r":
                terms.append((k, drive.gamma_r))
    return terms


def _summarize(config, traj, ryd_idx, p_idx):
    pops = traj.populations()
    return ConfigAmplitude(
        config=config,
        return_amplitude=complex(traj.states[-1, 0]),
        max_rydberg_population=float(pops[:, list(ryd_idx)].sum(axis=1).max()),
        max_p_population=float(pops[:, list(p_idx)].sum(axis=1).max()),
        rydberg_time=integrate_populations(traj, ryd_idx),
        p_time=integrate_populations(traj, p_idx),
        trajectory=traj,
    )


def run_single(drive, pulse, doppler_shift=0.0, with_decay=False, rel_tol=1e-10,
               output_points=201, config="01", initial_steps=None):
    H = build_single_hamiltonian(drive, pulse, doppler_shift)
    if with_decay:
        H = apply_phenomenological_decay(H, single_decay_terms(drive))
    traj = propagate(H, StateVector.basis(3, 0, SINGLE_LABELS),
                     TimeGrid(0.0, pulse.t_gate, output_points), rel_tol,
                     method="magnus", initial_steps=initial_steps,
                     breakpoints=pulse.breakpoints())
    return _summarize(config, traj, (2,), (1,))


def run_pair(drive, pulse, V, doppler=(0.0, 0.0), with_decay=False, rel_tol=1e-10,
             output_points=201, symmetric=None, initial_steps=None, pulse_b=None):
    """Run configuration ``11``.

    Identical atoms (equal Doppler shifts, same pulse) use the exact 6-state
    symmetric subspace unless ``symmetric=False``; otherwise the full 9x9
    model is propagated.
    """
    same = doppler[0] == doppler[1] and (pulse_b is None or pulse_b == pulse)
    if symmetric is None:
        symmetric = same
    if symmetric:
        if not same:
            raise ContractViolation("symmetric reduction needs identical atoms")
        H = build_symmetric_pair_hamiltonian(drive, pulse, V, doppler[0])
        terms = symmetric_decay_terms(drive)
        ryd, pp = _SYM_RYDBERG, _SYM_P
    else:
        H = build_pair_hamiltonian(drive, pulse, V, doppler, pulse_b)
        terms = pair_decay_terms(drive)
        ryd, pp = PAIR_RYDBERG, PAIR_P
    if with_decay:
        H = apply_phenomenological_decay(H, terms)
    traj = propagate(H, StateVector.basis(H.dim, 0, H.labels),
                     TimeGrid(0.0, pulse.t_gate, output_points), rel_tol, method="magnus",
                     initial_steps=initial_steps,
                     breakpoints=pulse.breakpoints() + (pulse_b or pulse).breakpoints())
    return _summarize("11", traj, ryd, pp)


def rr_population(amp):
    """``|rr>`` population along the stored trajectory of a ``11`` run."""
    traj = amp.trajectory
    return traj.populations()[:, traj.basis_labels.index("rr")]


def run_gate(drive, pulse, V, doppler=(0.0, 0.0), with_decay=False, rel_tol=1e-10,
             output_points=201, initial_steps=None, pulse_b=None):
    """Return amplitudes of all four qubit configurations.

    ``doppler`` holds the two-photon Doppler shifts of atom a (control) and
    atom b (target).  Configuration ``01`` drives atom b only, ``10`` atom a.
    ``pulse_b`` optionally gives atom b a different pulse (same timing).
    """
    if pulse_b is not None and pulse_b.t_gate != pulse.t_gate:
        raise ContractViolation("both atoms must share the gate window")
    if pulse.t_gate == 0 or pulse.omega_eff == 0:
        return {c: ConfigAmplitude(c, 1.0 + 0j) for c in CONFIGS}
    pb = pulse if pulse_b is None else pulse_b
    out = {"00": ConfigAmplitude("00", 1.0 + 0j)}
    try:
        out["01"] = run_single(drive, pb, doppler[1], with_decay, rel_tol, output_points, "01",
                               initial_steps)
        if doppler[0] == doppler[1] and pb == pulse:
            out["10"] = replace(out["01"], config="10")
        else:
            out["10"] = run_single(drive, pulse, doppler[0], with_decay, rel_tol,
                                   output_points, "10", initial_steps)
    except IntegrationFailure as exc:
        raise IntegrationFailure(f"config 01/10: {exc}", exc.last_time) from exc
    try:
        out["11"] = run_pair(drive, pulse, V, doppler, with_decay, rel_tol, output_points,
                             initial_steps=initial_steps, pulse_b=pulse_b)
    except IntegrationFailure as exc:
        raise IntegrationFailure(f"config 11: {exc}", exc.last_time) from exc
    return out


def assemble_gate(amps: Mapping[str, ConfigAmplitude]):
    missing = [c for c in CONFIGS if c not in amps]
    if missing:
        raise ContractViolation(f"missing configurations: {', '.join(missing)}")
    return GateMatrix.diag([complex(amps[c].return_amplitude) for c in CONFIGS])


def compensate_single_qubit_phase(G, phi01, phi10=None):
    """Undo single-qubit phases so that ``|01> -> -|01>``.

    Multiplies by ``diag(1, e^{i d_b}, e^{i d_a}, e^{i(d_a + d_b)})`` with
    ``d = pi - phi``.  ``phi10`` defaults to ``phi01`` (identical atoms).
    """
    if phi10 is None:
        phi10 = phi01
    db = math.pi - phi01
    da = math.pi - phi10
    corr = np.exp(1j * np.array([0.0, db, da, da + db]))
    return GateMatrix(np.diag(corr) @ G.entries)


def fidelity(G, ideal=CZ):
    """Phase-sensitive average gate fidelity ``[Tr(MM^) + |Tr M|^2] / (n(n+1))``."""
    g = G.entries if isinstance(G, GateMatrix) else np.asarray(G)
    u = ideal.entries if isinstance(ideal, GateMatrix) else np.asarray(ideal)
    if g.shape != (4, 4) or u.shape != (4, 4):
        raise ContractViolation("fidelity expects 4x4 matrices")
    n = g.shape[0]
    m = u.conj().T @ g
    return float((np.trace(m @ m.conj().T).real + abs(np.trace(m)) ** 2) / (n * (n + 1)))


def wrap_phase(phi):
    """Principal value in (-pi, pi]."""
    w = math.remainder(float(phi), 2 * math.pi)
    return math.pi if w == -math.pi else w


def phase_mismatch(amps):
    """``phi11 - 2 phi01 + pi`` wrapped to (-pi, pi]."""
    return wrap_phase(amps["11"].phase - 2 * amps["01"].phase + math.pi)


def gate_fidelity(amps, phi01=None, phi10=None, ideal=CZ):
    """Fidelity of the phase-compensated gate built from ``amps``.

    Without explicit phases the compensation is calibrated on ``amps`` itself.
    """
    G = assemble_gate(amps)
    if phi01 is None:
        phi01 = amps["01"].phase
    return fidelity(compensate_single_qubit_phase(G, phi01, phi10), ideal)


SYM_LABELS = ("11", "S1p", "w", "pp", "Spr", "rr")
_SYM_RYDBERG = (2, 4, 5)
_SYM_P = (1, 3, 4)


def build_symmetric_pair_hamiltonian(drive, pulse, V, doppler_shift=0.0, include_rr=True):
    """Pair Hamiltonian restricted to the exchange-symmetric subspace.

    Basis ``(|11>, S|1p>, w = S|1r>, |pp>, S|pr>, |rr>)`` with ``S`` the
    normalised symmetrisation.  Exact for equal Doppler shifts.  With
    ``include_rr=False`` the doubly excited state is dropped, i.e. perfect
    blockade.
    """
    pulse.check_reachable(drive)
    s2 = math.sqrt(2.0)
    d, dd = drive.delta, doppler_shift
    dim = 6 if include_rr else 5

    def batch(t):
        o1, o2 = pulse.rabi(np.asarray(t, dtype=float), d)
        h = np.zeros((o1.size, dim, dim), dtype=complex)
        h[:, 0, 1] = h[:, 1, 0] = s2 * o1 / 2
        h[:, 1, 2] = h[:, 2, 1] = o2 / 2
        h[:, 1, 3] = h[:, 3, 1] = s2 * o1 / 2
        h[:, 2, 4] = h[:, 4, 2] = o1 / 2
        h[:, 3, 4] = h[:, 4, 3] = s2 * o2 / 2
        h[:, 1, 1] = d
        h[:, 2, 2] = dd
        h[:, 3, 3] = 2 * d
        h[:, 4, 4] = d + dd
        if include_rr:
            h[:, 4, 5] = h[:, 5, 4] = s2 * o2 / 2
            h[:, 5, 5] = 2 * dd + V
        return h

    return HamiltonianProvider(batch, dim, hermitian=True,
                               constant=pulse.is_static,
                               labels=SYM_LABELS[:dim])


def symmetric_decay_terms(drive, include_rr=True):
    gp, gr = drive.gamma_p, drive.gamma_r
    terms = [(1, gp), (2, gr), (3, 2 * gp), (4, gp + gr)]
    if include_rr:
        terms.append((5, 2 * gr))
    return terms


def run_blockaded_pair(drive, pulse, doppler_shift=0.0, with_decay=False, rel_tol=1e-10,
                       output_points=201):
    """Perfect-blockade fast path: symmetric subspace without ``|rr>``."""
    H = build_symmetric_pair_hamiltonian(drive, pulse, 0.0, doppler_shift, include_rr=False)
    if with_decay:
        H = apply_phenomenological_decay(H, symmetric_decay_terms(drive, include_rr=False))
    traj = propagate(H, StateVector.basis(5, 0, H.labels),
                     TimeGrid(0.0, pulse.t_gate, output_points), rel_tol, method="magnus")
    return _summarize("11", traj, (2, 4), _SYM_P)


def blockade_two_level_amplitude(pulse, rel_tol=1e-10):
    """``|11>`` return amplitude of the adiabatically eliminated {11, w} model.

    Effective Hamiltonian (units of omega_eff): light shift ``-r`` on |11>,
    ``-(r + 1/r)/2`` on w, coupling ``-omega_eff/sqrt(2)``.
    """
    s2 = math.sqrt(2.0)

    def batch(t):
        t = np.asarray(t, dtype=float)
        r = pulse.ratio(t)
        oe = pulse.omega_eff_at(t)
        h = np.zeros((r.size, 2, 2), dtype=complex)
        h[:, 0, 0] = -oe * r
        h[:, 1, 1] = -0.5 * oe * (r + 1 / r)
        h[:, 0, 1] = h[:, 1, 0] = -oe / s2
        return h

    H = HamiltonianProvider(batch, 2, labels=("11", "w"))
    traj = propagate(H, StateVector.basis(2, 0), TimeGrid(0.0, pulse.t_gate, 2), rel_tol,
                     method="magnus")
    return complex(traj.states[-1, 0])


def jaksch_baseline(drive, omega_eff, V, output_points=401, rel_tol=1e-10):
    """Rydberg exposure of the original pi - 2pi - pi blockade gate.

    Constant symmetric drive (r = 1).  Returns the time-integrated Rydberg
    population of the ``11`` input (us) and the peak population of the
    central 2pi pulse on the target atom.
    """
    pi_pulse = PulseShape(family="constant", omega_eff=omega_eff, ratio_peak=1.0,
                          t_gate=math.pi / omega_eff)
    two_pi = replace(pi_pulse, t_gate=2 * math.pi / omega_eff)
    # control pi pulse then target 2pi pulse (blocked) then control pi pulse
    ctrl = run_single(drive, pi_pulse, output_points=output_points, rel_tol=rel_tol)
    targ = run_single(drive, two_pi, output_points=output_points, rel_tol=rel_tol)
    # 11: control spends two pi-pulses' worth of excitation plus the blocked 2pi wait
    t_pi = pi_pulse.t_gate
    ryd_11 = 2 * ctrl.rydberg_time + 2 * t_pi * 1.0
    ryd_01 = targ.rydberg_time
    ryd_10 = 2 * ctrl.rydberg_time + 2 * t_pi * 1.0
    return {
        "rydberg_time_11": ryd_11,
        "rydberg_time_01": ryd_01,
        "rydberg_time_10": ryd_10,
        "rydberg_time_mean": (ryd_01 + ryd_10 + ryd_11) / 4,
        "peak_2pi": targ.max_rydberg_population,
        "total_time": 4 * math.pi / omega_eff,
    }
