"""Single-step Rydberg-blockade CZ gate between stored photons.

Submodules
----------
dynamics   time-dependent Schrodinger propagation (Magnus-4, DOP853, exact)
gate       ladder Hamiltonians, pulse family, gate assembly and fidelity
optimize   Nelder-Mead search over the intensity-ratio pulse
budget     error channels at one gate speed and sweeps over speeds
blockade   finite blockade across overlapping spin waves
manifold   leakage with a dipole-coupled pair manifold
analytic   closed forms (adiabatic amplitudes, beam power to Rabi frequency)
config     JSON run configuration
cli        command-line entry point
"""

__version__ = "0.1.0"
