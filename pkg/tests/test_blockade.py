import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from rydgate.blockade import (InteractionModel, Sampler, SpinWaveProfile, inhomogeneous_phase_error,
                              leakage_phase_error, pair_infidelity, separation_quadrature,
                              spinwave_infidelity, vdw_interaction)
from rydgate.dynamics import ContractViolation
from rydgate.gate import CZ, GateMatrix, compensate_single_qubit_phase, fidelity, run_single

from conftest import OMEGA_EFF, R_B

SHAPES = ("gaussian", "super_gaussian_10")


# -- interaction ----------------------------------------------------------------

def test_vdw_power_law(blockade_model):
    assert vdw_interaction([R_B, 0, 0], blockade_model) == pytest.approx(OMEGA_EFF, rel=1e-14)
    assert vdw_interaction([0, 2 * R_B, 0], blockade_model) == pytest.approx(OMEGA_EFF / 64,
                                                                             rel=1e-14)


def test_isotropic_mode_is_consistent():
    iso = InteractionModel(OMEGA_EFF * R_B ** 6, R_B, R_B, "isotropic")
    x = np.array([1.0, 2.0, -2.0]) * R_B / 3.0
    assert vdw_interaction(x, iso) == pytest.approx(OMEGA_EFF, rel=1e-14)


def test_anisotropic_scaling():
    m = InteractionModel.for_pulse(OMEGA_EFF, R_B, anisotropy=2.0)
    assert vdw_interaction([2 * R_B, 0, 0], m) == pytest.approx(OMEGA_EFF, rel=1e-14)
    assert m.omega_eff == pytest.approx(OMEGA_EFF, rel=1e-14)


def test_zero_separation_is_singular(blockade_model):
    with pytest.raises(ContractViolation):
        vdw_interaction([0.0, 0.0, 0.0], blockade_model)
    with pytest.raises(ContractViolation):
        vdw_interaction([1.0, 0.0], blockade_model)


@pytest.mark.parametrize("kw", [dict(C6=0.0, Rb_par=1.0, Rb_perp=1.0),
                                dict(C6=1.0, Rb_par=1.0, Rb_perp=1.0, mode="dipolar")])
def test_interaction_model_validation(kw):
    with pytest.raises(ContractViolation):
        InteractionModel(**kw)


# -- profiles and separation quadrature ------------------------------------------

@pytest.mark.parametrize("shape", SHAPES)
def test_profile_is_normalised(shape):
    prof = SpinWaveProfile(shape, 2.0, 3.0)
    x, wx = special.roots_legendre(400)
    xs, ws = 4.0 * prof.w_par * x, 4.0 * prof.w_par * wx
    rho, wr = 2.0 * prof.w_perp * (x + 1), 2.0 * prof.w_perp * wx
    dens = prof.density(xs[:, None], rho[None, :])
    total = ws @ dens @ (2 * math.pi * rho * wr)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_profile_validation():
    with pytest.raises(ContractViolation):
        SpinWaveProfile("lorentzian", 1.0, 1.0)
    with pytest.raises(ContractViolation):
        SpinWaveProfile("gaussian", 0.0, 1.0)


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("d", [0.4, 0.8, 1.2])
def test_separation_weights_are_normalised(shape, d, blockade_model):
    prof = SpinWaveProfile.from_diameter(shape, d, R_B)
    u, w, raw = separation_quadrature(prof, blockade_model)
    assert raw == pytest.approx(1.0, abs=1e-6)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w >= 0) and np.all(u > 0)


def test_gaussian_separation_second_moment(blockade_model):
    # x1 - x2 of two independent Gaussians exp(-2 x^2/w^2): variance w^2/2 per axis
    prof = SpinWaveProfile.from_diameter("gaussian", 0.8, R_B)
    u, w, _ = separation_quadrature(prof, blockade_model)
    assert w @ u ** 2 == pytest.approx(3 * (0.4 ** 2) / 2, rel=1e-6)


def test_sampler_validation():
    with pytest.raises(ContractViolation):
        Sampler(method="sobol")
    with pytest.raises(ContractViolation):
        Sampler(radial=1)
    assert Sampler().refined() == Sampler(128, 32, "quadrature", 40000, 0)


# -- localized pairs -----------------------------------------------------------------

def test_deep_blockade_pair(drive1000, pulse1000):
    assert pair_infidelity(0.1, drive1000, pulse1000) <= 1e-6
    with pytest.raises(ContractViolation):
        pair_infidelity(0.0, drive1000, pulse1000)


def test_pair_error_grows_with_distance(drive1000, pulse1000):
    errs = [pair_infidelity(d, drive1000, pulse1000) for d in (0.2, 0.4, 0.6, 0.8)]
    assert np.all(np.diff(errs) > 0)


def test_distant_pair_is_the_factorized_gate(drive1000, pulse1000):
    a01 = run_single(drive1000.lossless(), pulse1000, rel_tol=1e-9,
                     output_points=2).return_amplitude
    G = GateMatrix.diag([1.0, a01, a01, a01 ** 2])
    free = 1.0 - fidelity(compensate_single_qubit_phase(G, float(np.angle(a01))), CZ)
    assert free > 0.1
    assert pair_infidelity(50.0, drive1000, pulse1000) == pytest.approx(free, abs=1e-8)


# -- spin waves ------------------------------------------------------------------------

def test_point_like_spinwave_is_a_blockaded_pair(drive1000, pulse1000, blockade_model):
    prof = SpinWaveProfile.from_diameter("gaussian", 2e-3, R_B)
    res = spinwave_infidelity(prof, blockade_model, drive1000, pulse1000, Sampler(16, 4))
    assert not res.warnings
    assert res.infidelity == pytest.approx(pair_infidelity(1e-3, drive1000, pulse1000), abs=1e-6)
    assert res.infidelity <= 1e-6


def test_under_resolved_sampler_warns(drive1000, pulse1000, blockade_model):
    prof = SpinWaveProfile.from_diameter("gaussian", 2e-3, R_B)
    res = spinwave_infidelity(prof, blockade_model, drive1000, pulse1000, Sampler(8, 2))
    assert any("under-resolved" in w for w in res.warnings)
    with pytest.raises(ContractViolation):
        spinwave_infidelity(prof, blockade_model, drive1000, pulse1000, Sampler(8, 2),
                            average="median")


@pytest.mark.parametrize("d", [0.6, 0.8, 1.0])
def test_gaussian_tails_cost_more(spinwave_table, d):
    assert spinwave_table["gaussian", d].infidelity > spinwave_table["super_gaussian_10", d].infidelity


def test_spinwave_error_grows_with_diameter(spinwave_table):
    for shape in SHAPES:
        errs = [spinwave_table[shape, d].infidelity for d in (0.6, 0.8, 1.0)]
        assert np.all(np.diff(errs) > 0)


def test_pair_bounds_the_spinwave(drive1000, pulse1000, spinwave_table):
    assert pair_infidelity(0.8, drive1000, pulse1000) \
        >= spinwave_table["super_gaussian_10", 0.8].infidelity


@pytest.mark.xfail(strict=True, reason="pair error at D = 0.8 R_b is 5.9e-2; the sixth-power "
                   "interaction at the blockade edge gives far more than 1e-3 for a fixed pair")
def test_pair_at_edge_is_of_order_1e3(drive1000, pulse1000):
    assert 1e-4 <= pair_infidelity(0.8, drive1000, pulse1000) <= 1e-2


@pytest.mark.xfail(strict=True, reason="measured 5.1e-3: about 1% of separations exceed "
                   "u = 0.8 where the pair error passes 1e-2")
def test_super_gaussian_anchor(spinwave_table):
    assert spinwave_table["super_gaussian_10", 0.8].infidelity == pytest.approx(1e-3, rel=1.0)


@pytest.mark.slow
def test_sampler_refinement_changes_little(drive1000, pulse1000, blockade_model, spinwave_table):
    prof = SpinWaveProfile.from_diameter("super_gaussian_10", 0.8, R_B)
    fine = spinwave_infidelity(prof, blockade_model, drive1000, pulse1000, Sampler().refined())
    coarse = spinwave_table["super_gaussian_10", 0.8].infidelity
    assert fine.infidelity == pytest.approx(coarse, rel=0.05)


@pytest.mark.slow
def test_monte_carlo_agrees_with_quadrature(drive1000, pulse1000, blockade_model, spinwave_table):
    prof = SpinWaveProfile.from_diameter("gaussian", 0.8, R_B)
    mc = spinwave_infidelity(prof, blockade_model, drive1000, pulse1000,
                             Sampler(method="montecarlo", seed=3))
    assert mc.infidelity == pytest.approx(spinwave_table["gaussian", 0.8].infidelity, rel=0.1)
    assert mc.weights.size == Sampler().samples


# -- leakage phase ---------------------------------------------------------------------

def test_homogeneous_phase_is_harmless():
    w = np.full(5, 0.2)
    assert inhomogeneous_phase_error(np.zeros(5), w) == 0.0
    assert inhomogeneous_phase_error(np.full(5, 1.234), w) == pytest.approx(0.0, abs=1e-15)


@given(phases=st.lists(st.floats(-10, 10), min_size=1, max_size=12), shift=st.floats(-50, 50))
def test_phase_error_shift_invariant(phases, shift):
    phases = np.array(phases)
    w = np.arange(1, phases.size + 1, dtype=float)
    w /= w.sum()
    a = inhomogeneous_phase_error(phases, w)
    assert 0.0 <= a <= 1.0
    assert inhomogeneous_phase_error(phases + shift, w) == pytest.approx(a, abs=1e-12)


def test_two_phase_oracle():
    # equal weights on 0 and pi: the average phasor vanishes
    assert inhomogeneous_phase_error([0.0, math.pi], [0.5, 0.5]) == pytest.approx(1.0)


def test_blockaded_leakage_vanishes(drive1000, pulse1000, blockade_model):
    prof = SpinWaveProfile.from_diameter("super_gaussian_10", 2e-3, R_B)
    err = leakage_phase_error(prof, blockade_model, drive1000, pulse1000, Sampler(16, 4),
                              output_points=501)
    assert err <= 1e-9


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="measured 1.07e-2 at D = 0.8 R_b: just above the 1e-2 "
                   "bound; the tail of separations beyond the blockade radius dominates")
def test_super_gaussian_leakage_below_1e2(drive1000, pulse1000, blockade_model):
    prof = SpinWaveProfile.from_diameter("super_gaussian_10", 0.8, R_B)
    assert leakage_phase_error(prof, blockade_model, drive1000, pulse1000) < 1e-2
