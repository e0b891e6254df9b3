import pytest

from rydgate.blockade import InteractionModel, Sampler, SpinWaveProfile, spinwave_infidelity
from rydgate.config import DEFAULT_RAMP, OPTIMIZED_PULSES
from rydgate.gate import DriveParams, PulseShape
from rydgate.units import TWO_PI

OMEGA_EFF = TWO_PI * 2.3  # rad/us
R_B = 5.85  # um at OMEGA_EFF with the default C6
BLOCKADE_V = 1e6 * OMEGA_EFF

# acceptance parts collected by test_acceptance.py: criterion -> (title, [Part, ...])
ACCEPTANCE = {}


class Part:
    """One checked clause of an acceptance criterion; FAIL until ``check`` says otherwise."""

    def __init__(self, criterion, title, name):
        self.name, self.ok, self.detail = name, False, "did not complete"
        ACCEPTANCE.setdefault(criterion, (title, []))[1].append(self)

    def check(self, ok, detail):
        self.ok, self.detail = bool(ok), detail
        return self.ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[n]
        verdict = "PASS" if all(p.ok for p in parts) else "FAIL"
        body = "; ".join(f"{p.name}: {'ok' if p.ok else 'FAIL'} ({p.detail})" for p in parts)
        terminalreporter.write_line(f"{verdict} criterion {n} {title}: {body}")


@pytest.fixture(scope="session")
def omega_eff():
    return OMEGA_EFF


@pytest.fixture(scope="session")
def drive1000():
    return DriveParams.for_ratio(OMEGA_EFF, 1000.0)


@pytest.fixture(scope="session")
def drive300():
    return DriveParams.for_ratio(OMEGA_EFF, 300.0)


@pytest.fixture(scope="session")
def pulse1000():
    return PulseShape.dimensionless(OMEGA_EFF, *OPTIMIZED_PULSES[1000], ramp=DEFAULT_RAMP)


@pytest.fixture(scope="session")
def pulse300():
    return PulseShape.dimensionless(OMEGA_EFF, *OPTIMIZED_PULSES[300], ramp=DEFAULT_RAMP)


def constant_pulse(ratio, t_gate, omega=OMEGA_EFF, ramp=0.0):
    return PulseShape(family="constant", omega_eff=omega, ratio_peak=ratio, t_gate=t_gate,
                      ramp_time=ramp)


@pytest.fixture(scope="session")
def blockade_model():
    return InteractionModel.for_pulse(OMEGA_EFF, R_B)


@pytest.fixture(scope="session")
def spinwave_table(drive1000, pulse1000, blockade_model):
    """Spin-wave gate errors at the default sampler, keyed by (shape, D/R_b)."""
    out = {}
    for shape in ("gaussian", "super_gaussian_10"):
        for d in (0.6, 0.8, 1.0):
            prof = SpinWaveProfile.from_diameter(shape, d, R_B)
            out[shape, d] = spinwave_infidelity(prof, blockade_model, drive1000, pulse1000,
                                                Sampler())
    return out
