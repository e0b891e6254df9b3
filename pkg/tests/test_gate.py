import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydgate.dynamics import ContractViolation, StateVector, TimeGrid, propagate
from rydgate.gate import (CONFIGS, CZ, IDENTITY, PAIR_LABELS, ConfigAmplitude, DriveParams,
                          GateMatrix, PulseShape, assemble_gate, blockade_two_level_amplitude,
                          build_pair_hamiltonian, build_single_hamiltonian,
                          compensate_single_qubit_phase, fidelity, gate_fidelity, jaksch_baseline,
                          phase_mismatch, rr_population, run_gate, run_pair, run_single,
                          wrap_phase)

from conftest import BLOCKADE_V, OMEGA_EFF, constant_pulse

phases = st.floats(-10.0, 10.0, allow_nan=False)


def amps_from(values):
    return {c: ConfigAmplitude(c, complex(v)) for c, v in zip(CONFIGS, values)}


@pytest.fixture(scope="module")
def optimum(drive1000, pulse1000):
    return run_gate(drive1000.lossless(), pulse1000, BLOCKADE_V, output_points=401)


# -- types ------------------------------------------------------------------

def test_drive_validation():
    with pytest.raises(ContractViolation):
        DriveParams(delta=0.0)
    with pytest.raises(ContractViolation):
        DriveParams(delta=1.0, gamma_p=-1.0)
    with pytest.raises(ContractViolation):
        DriveParams(delta=1.0, omega1_peak=-1.0)


@pytest.mark.parametrize("kw", [dict(family="square"), dict(t_gate=-1.0), dict(ratio_peak=0.0),
                                dict(width=0.0), dict(ratio_base=-0.1),
                                dict(t_gate=1.0, ramp_time=0.6)])
def test_pulse_validation(kw):
    with pytest.raises(ContractViolation):
        PulseShape(**kw)


@pytest.mark.parametrize("ramp", [0.0, 0.1])
def test_pulse_keeps_effective_rabi_constant(drive1000, ramp):
    p = PulseShape.dimensionless(OMEGA_EFF, 1.85, 2.56, 7.88, 0.36, ramp=ramp)
    t = np.linspace(p.ramp_time, p.t_gate - p.ramp_time, 2001)
    o1, o2 = p.rabi(t, drive1000.delta)
    assert np.all(o1 >= 0) and np.all(o2 >= 0)
    np.testing.assert_allclose(o1 * o2 / (2 * drive1000.delta), OMEGA_EFF, rtol=1e-12, atol=0)
    np.testing.assert_allclose(o1 / o2, p.ratio(t), rtol=1e-12)


def test_envelope_switches_smoothly(pulse1000, drive1000):
    o1, o2 = pulse1000.rabi(np.array([0.0, pulse1000.t_gate]), drive1000.delta)
    assert np.all(o1 == 0) and np.all(o2 == 0)
    t = np.linspace(0, pulse1000.t_gate, 4001)
    np.testing.assert_allclose(pulse1000.omega_eff_at(t),
                               OMEGA_EFF * pulse1000.envelope(t) ** 2, rtol=1e-14)
    assert pulse1000.breakpoints() == (pulse1000.ramp_time,
                                       pulse1000.t_gate - pulse1000.ramp_time)


def test_unreachable_pulse_rejected(drive1000, pulse1000):
    capped = replace(drive1000, omega2_peak=1.0)
    with pytest.raises(ContractViolation):
        build_single_hamiltonian(capped, pulse1000)


def test_dimensionless_roundtrip():
    p = PulseShape.dimensionless(3.0, 1.5, 2.5, 7.7, 0.2)
    np.testing.assert_allclose(p.in_units(), (1.5, 2.5, 7.7, 0.2), rtol=1e-15)
    assert p.t_center == pytest.approx(p.t_gate / 2)


# -- Hamiltonians -----------------------------------------------------------

def test_single_hamiltonian_entries(drive1000):
    p = PulseShape(omega_eff=OMEGA_EFF, ratio_peak=1.0, width=2.5 / OMEGA_EFF,
                   t_gate=7.7 / OMEGA_EFF)
    shift = 2 * math.pi * 0.019
    h = build_single_hamiltonian(drive1000, p, shift)(p.t_center)
    expected = math.sqrt(2 * drive1000.delta * OMEGA_EFF) / 2
    assert h[0, 1] == pytest.approx(expected, rel=1e-14)
    assert h[1, 2] == pytest.approx(expected, rel=1e-14)
    assert h[1, 0] == np.conj(h[0, 1])
    assert h[1, 1] == drive1000.delta
    assert h[2, 2] == shift
    assert h[0, 0] == 0


def test_pair_hamiltonian_is_tensor_sum(drive1000, pulse1000):
    t = 0.37 * pulse1000.t_gate
    da, db, V = 0.3, -0.2, 5.0
    ha = build_single_hamiltonian(drive1000, pulse1000, da)(t)
    hb = build_single_hamiltonian(drive1000, pulse1000, db)(t)
    h = build_pair_hamiltonian(drive1000, pulse1000, V, (da, db))(t)
    expected = np.kron(ha, np.eye(3)) + np.kron(np.eye(3), hb)
    expected[PAIR_LABELS.index("rr"), PAIR_LABELS.index("rr")] += V
    np.testing.assert_allclose(h, expected, atol=1e-12)


# -- gate runs --------------------------------------------------------------

def test_zero_interaction_factorizes(drive1000, pulse1000):
    amps = run_gate(drive1000.lossless(), pulse1000, 0.0, output_points=2)
    a01 = amps["01"].return_amplitude
    assert abs(amps["11"].return_amplitude - a01 ** 2) <= 1e-9
    full = run_pair(drive1000.lossless(), pulse1000, 0.0, symmetric=False, output_points=2)
    assert abs(full.return_amplitude - a01 ** 2) <= 1e-9


def test_asymmetric_doppler_factorizes_at_zero_interaction(drive1000, pulse1000):
    amps = run_gate(drive1000.lossless(), pulse1000, 0.0, doppler=(0.4, -0.7), output_points=2)
    product = amps["01"].return_amplitude * amps["10"].return_amplitude
    assert abs(amps["11"].return_amplitude - product) <= 1e-9


def test_deep_blockade_suppresses_double_excitation(drive1000, pulse1000):
    amp = run_pair(drive1000.lossless(), pulse1000, BLOCKADE_V, symmetric=False,
                   output_points=401)
    assert rr_population(amp).max() <= 1e-10


def test_symmetric_subspace_matches_full_pair_model(drive1000, pulse1000):
    sym = run_pair(drive1000.lossless(), pulse1000, 3 * OMEGA_EFF, output_points=2)
    full = run_pair(drive1000.lossless(), pulse1000, 3 * OMEGA_EFF, symmetric=False,
                    output_points=2)
    assert abs(sym.return_amplitude - full.return_amplitude) <= 1e-8


def _first_minimum(H, dim, period_guess):
    # start in the slow (dressed) part of the bare state so no fast |p> beat remains
    w, v = np.linalg.eigh(H(0.0))
    slow = v[:, np.abs(w) < 10 * OMEGA_EFF]
    psi0 = slow @ slow[0].conj()
    psi0 /= np.linalg.norm(psi0)
    traj = propagate(H, StateVector(psi0), TimeGrid(0.0, 0.75 * period_guess, 6001))
    ret = np.abs(traj.states @ psi0.conj()) ** 2
    k = int(np.argmin(ret))
    t = traj.times
    a, b, _ = np.polyfit(t[k - 4:k + 5] - t[k], ret[k - 4:k + 5], 2)
    return t[k] - b / (2 * a)


def test_blockade_enhances_rabi_frequency_by_sqrt2(drive1000):
    p = constant_pulse(1.0, 10 / OMEGA_EFF)
    single = _first_minimum(build_single_hamiltonian(drive1000.lossless(), p), 3,
                            2 * math.pi / OMEGA_EFF)
    pair = _first_minimum(build_pair_hamiltonian(drive1000.lossless(), p, BLOCKADE_V), 9,
                          2 * math.pi / OMEGA_EFF / math.sqrt(2))
    assert single / pair == pytest.approx(math.sqrt(2), rel=1e-4)


def test_blockade_reduction_matches_pair_model(pulse1000):
    # the reduction drops O(omega_eff/delta) light shifts: compare deep in the adiabatic regime
    drive = DriveParams.for_ratio(OMEGA_EFF, 1e5).lossless()
    full = run_pair(drive, pulse1000, BLOCKADE_V, output_points=2).return_amplitude
    assert abs(full - blockade_two_level_amplitude(pulse1000)) <= 1e-4


def test_blockade_reduction_error_scales_inversely_with_detuning(pulse1000):
    err = []
    for ratio in (1e3, 1e4):
        drive = DriveParams.for_ratio(OMEGA_EFF, ratio).lossless()
        full = run_pair(drive, pulse1000, BLOCKADE_V, output_points=2).return_amplitude
        err.append(abs(full - blockade_two_level_amplitude(pulse1000)))
    assert err[0] < 5e-3
    assert err[0] / err[1] == pytest.approx(10.0, rel=0.1)


def test_identical_atoms_share_amplitudes(drive1000, pulse1000):
    amps = run_gate(drive1000.lossless(), pulse1000, BLOCKADE_V, doppler=(0.2, 0.2),
                    output_points=2)
    assert amps["01"].return_amplitude == amps["10"].return_amplitude
    assert amps["00"].return_amplitude == 1.0


def test_optimized_gate_returns_population(optimum, pulse1000):
    for c in CONFIGS:
        assert abs(optimum[c].return_amplitude) >= 1 - 1e-4
    assert abs(phase_mismatch(optimum)) <= 1e-3
    assert pulse1000.t_gate * OMEGA_EFF == pytest.approx(2.451 * math.pi, rel=0.05)
    assert gate_fidelity(optimum) >= 0.9999


def test_optimized_gate_reduces_rydberg_exposure(optimum, drive1000):
    base = jaksch_baseline(drive1000.lossless(), OMEGA_EFF, BLOCKADE_V)
    assert optimum["11"].rydberg_time / base["rydberg_time_11"] <= 0.5
    assert optimum["11"].max_rydberg_population < base["peak_2pi"]


def test_populations_are_bounded(optimum):
    for c in CONFIGS:
        amp = optimum[c]
        assert abs(amp.return_amplitude) <= 1 + 1e-12
        assert 0 <= amp.max_rydberg_population <= 1 + 1e-12
        assert 0 <= amp.max_p_population <= 1 + 1e-12


def test_decay_reduces_moduli(drive1000, pulse1000):
    amps = run_gate(drive1000, pulse1000, BLOCKADE_V, with_decay=True, output_points=2)
    G = assemble_gate(amps)
    assert np.all(np.abs(G.diagonal[1:]) < 1)
    assert abs(G.diagonal[0]) == 1


def test_zero_duration_gate_is_identity(drive1000):
    p = PulseShape(omega_eff=OMEGA_EFF, t_gate=0.0)
    amps = run_gate(drive1000, p, BLOCKADE_V)
    assert np.array_equal(assemble_gate(amps).entries, IDENTITY.entries)


def test_mismatched_gate_windows_rejected(drive1000, pulse1000):
    with pytest.raises(ContractViolation):
        run_gate(drive1000, pulse1000, BLOCKADE_V, pulse_b=replace(pulse1000, t_gate=1.0))


def test_single_run_reports_trajectory(drive1000, pulse1000):
    amp = run_single(drive1000.lossless(), pulse1000, output_points=11)
    assert len(amp.trajectory) == 11
    assert amp.trajectory.basis_labels == ("1", "p", "r")


# -- assembly, compensation, fidelity --------------------------------------

def test_assemble_requires_all_configs():
    amps = amps_from([1, 1, 1, 1])
    del amps["10"]
    with pytest.raises(ContractViolation):
        assemble_gate(amps)


def test_assemble_ones_is_identity():
    assert np.array_equal(assemble_gate(amps_from([1, 1, 1, 1])).entries, IDENTITY.entries)


@given(phi=phases)
def test_compensation_maps_ideal_phases_to_cz(phi):
    G = GateMatrix.diag([1, np.exp(1j * phi), np.exp(1j * phi), np.exp(1j * (2 * phi - math.pi))])
    np.testing.assert_allclose(compensate_single_qubit_phase(G, phi).entries, CZ.entries,
                               atol=1e-12)


def test_compensation_of_identity():
    out = compensate_single_qubit_phase(IDENTITY, 0.0)
    np.testing.assert_allclose(out.diagonal, [1, -1, -1, 1], atol=1e-15)


def test_compensated_optimum_is_cz(optimum):
    G = compensate_single_qubit_phase(assemble_gate(optimum), optimum["01"].phase)
    for z, target in zip(G.diagonal, (1, -1, -1, -1)):
        assert abs(wrap_phase(np.angle(z) - np.angle(target))) <= 1e-3


def test_fidelity_values():
    assert fidelity(CZ, CZ) == 1.0
    assert fidelity(IDENTITY, CZ) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ContractViolation):
        fidelity(np.eye(3), CZ)


@given(alpha=phases)
def test_fidelity_global_phase_invariance(alpha):
    assert fidelity(GateMatrix(np.exp(1j * alpha) * CZ.entries), CZ) == pytest.approx(1.0,
                                                                                      abs=1e-12)
    g = GateMatrix.diag([1, 0.9j, -0.8, 0.7])
    assert fidelity(GateMatrix(np.exp(1j * alpha) * g.entries), CZ) == pytest.approx(
        fidelity(g, CZ), abs=1e-12)


@settings(max_examples=50)
@given(loss=st.floats(0.0, 1.0), k=st.integers(1, 3))
def test_fidelity_decreases_under_amplitude_loss(loss, k):
    diag = np.array([1, -1, -1, -1], dtype=complex)
    lossy = diag.copy()
    lossy[k] *= 1 - loss
    assert fidelity(GateMatrix.diag(lossy), CZ) <= fidelity(GateMatrix.diag(diag), CZ) + 1e-15


@given(phi=phases)
def test_wrap_phase_principal_value(phi):
    w = wrap_phase(phi)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(phi), abs_tol=1e-12)
    assert math.isclose(math.sin(w), math.sin(phi), abs_tol=1e-12)


def test_phase_mismatch_of_ideal_amplitudes():
    phi = 0.3
    amps = amps_from([1, np.exp(1j * phi), np.exp(1j * phi), np.exp(1j * (2 * phi - math.pi))])
    assert abs(phase_mismatch(amps)) <= 1e-12
