"""State-vector propagation under time-dependent Hamiltonians.

Two integrators are provided:

``"magnus"``
    Fourth-order Magnus (two Gauss-Legendre nodes plus the commutator
    term) on a uniform grid, refined by step doubling until two successive
    grids agree to ``rel_tol``.  Each step is an exact exponential, so
    large static diagonal terms (intermediate detuning, blockade shift)
    cost nothing in step size.  This is the default for the gate models.
``"rk"``
    Adaptive embedded Runge-Kutta 8(5,3) (``scipy.integrate.solve_ivp``
    with DOP853) with dense output.  Used as an independent cross-check.

Time-independent providers are propagated exactly through one
eigendecomposition (``"exact"``); ``"auto"`` picks it when available.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg

_SQRT3 = np.sqrt(3.0)


class ContractViolation(ValueError):
    """Raised when an operation is called outside its documented domain."""


class IntegrationFailure(RuntimeError):
    """Raised when the integrator cannot reach the requested accuracy."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis_labels: tuple = ()

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).copy()
        if amps.ndim != 1:
            raise ContractViolation("state amplitudes must be one-dimensional")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        labels = tuple(self.basis_labels)
        if labels and len(labels) != amps.size:
            raise ContractViolation("basis_labels length does not match amplitudes")
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self):
        return self.amplitudes.size

    def norm2(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def populations(self):
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def basis(cls, dim, index, labels=()):
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps, labels)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    output_points: int = 2

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ContractViolation(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if int(self.output_points) < 2:
            raise ContractViolation("output_points must be >= 2")

    @property
    def times(self):
        return np.linspace(self.t_start, self.t_end, int(self.output_points))


@dataclass(frozen=True)
class HamiltonianProvider:
    """Time-dependent dense Hamiltonian in rad/us.

    Parameters
    ----------
    batch : callable
        Maps a 1-D array of times (us) to an array of shape ``(n, dim, dim)``.
    dim : int
        Hilbert-space dimension.
    hermitian : bool
        Whether the matrices are Hermitian at every time.
    constant : bool
        The matrix does not depend on time.
    """

    batch: Callable[[np.ndarray], np.ndarray]
    dim: int
    hermitian: bool = True
    constant: bool = False
    labels: tuple = field(default=())

    def __call__(self, t):
        return self.batch(np.atleast_1d(np.asarray(t, dtype=float)))[0]

    @classmethod
    def from_matrix(cls, matrix, labels=()):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractViolation("Hamiltonian matrix must be square")
        m.setflags(write=False)
        herm = bool(np.allclose(m, m.conj().T, rtol=0, atol=0))
        return cls(lambda t: np.broadcast_to(m, (len(t),) + m.shape), m.shape[0],
                   hermitian=herm, constant=True, labels=tuple(labels))

    def shifted_diagonal(self, diag):
        """Provider with a constant complex diagonal added."""
        d = np.asarray(diag, dtype=complex)
        if d.shape != (self.dim,):
            raise ContractViolation("diagonal shift has the wrong length")
        base = self.batch
        herm = self.hermitian and not np.any(d.imag)

        def batch(t):
            h = np.array(base(t), dtype=complex)
            h[:, np.arange(self.dim), np.arange(self.dim)] += d
            return h

        return HamiltonianProvider(batch, self.dim, herm, self.constant, self.labels)

    def time_reversed(self, t_start, t_end):
        """``-H(t_start + t_end - t)``: undoes the forward evolution."""
        base = self.batch
        return HamiltonianProvider(
            lambda t: -np.asarray(base(t_start + t_end - np.asarray(t))),
            self.dim, self.hermitian, self.constant, self.labels)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim)
    basis_labels: tuple = ()
    method: str = ""
    steps: int = 0

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        return float(self.times[k]), StateVector(self.states[k], self.basis_labels)

    def __iter__(self):
        for k in range(len(self.times)):
            yield self[k]

    @property
    def final(self):
        return StateVector(self.states[-1], self.basis_labels)

    def populations(self):
        return np.abs(self.states) ** 2

    def norm2(self):
        return np.sum(self.populations(), axis=1)


def apply_phenomenological_decay(H, decay_terms):
    """Add ``-i*gamma/2`` to the listed diagonal entries.

    ``decay_terms`` is a sequence of ``(basis_index, gamma)`` pairs, gamma in
    1/us.  Rates on the same index accumulate.
    """
    diag = np.zeros(H.dim, dtype=complex)
    for index, gamma in decay_terms:
        if not 0 <= index < H.dim:
            raise ContractViolation(f"decay index {index} outside 0..{H.dim - 1}")
        if gamma < 0:
            raise ContractViolation(f"negative decay rate {gamma} on level {index}")
        diag[index] += -0.5j * gamma
    if not np.any(diag):
        return H
    return H.shifted_diagonal(diag)


def _step_propagators(H, t0, t1, n):
    h = (t1 - t0) / n
    starts = t0 + h * np.arange(n)
    h1 = np.asarray(H.batch(starts + (0.5 - _SQRT3 / 6.0) * h), dtype=complex)
    h2 = np.asarray(H.batch(starts + (0.5 + _SQRT3 / 6.0) * h), dtype=complex)
    heff = 0.5 * (h1 + h2) - 1j * (_SQRT3 * h / 12.0) * (h2 @ h1 - h1 @ h2)
    if H.hermitian:
        w, v = np.linalg.eigh(heff)
        return (v * np.exp(-1j * h * w)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
    return linalg.expm(-1j * h * heff)


def _magnus_sweep(H, psi0, times, substeps, chunk=4096):
    # uniform output spacing -> one uniform step grid over the whole span
    n = substeps * (len(times) - 1)
    out = np.empty((len(times), psi0.size), dtype=complex)
    out[0] = psi0
    psi = psi0.copy()
    h = (times[-1] - times[0]) / n
    done = 0
    while done < n:
        m = min(chunk, n - done)
        t0 = times[0] + done * h
        for j, u in enumerate(_step_propagators(H, t0, t0 + m * h, m)):
            psi = u @ psi
            if (done + j + 1) % substeps == 0:
                out[(done + j + 1) // substeps] = psi
        done += m
    return out


def _propagate_magnus(H, psi0, times, rel_tol, max_steps, initial_steps=None):
    intervals = len(times) - 1
    start = 32 if initial_steps is None else max(1, int(initial_steps))
    sub = max(1, int(np.ceil(start / intervals)))
    coarse = _magnus_sweep(H, psi0, times, sub)
    ref = max(1.0, float(np.max(np.abs(psi0))))
    while True:
        if 2 * sub * intervals > max_steps:
            raise IntegrationFailure(
                f"Magnus refinement exceeded {max_steps} steps at rel_tol={rel_tol:g}",
                last_time=float(times[0]))
        fine = _magnus_sweep(H, psi0, times, 2 * sub)
        err = float(np.max(np.abs(fine - coarse))) / 15.0
        sub *= 2
        if err <= rel_tol * ref:
            return fine, sub * intervals
        coarse = fine


def _propagate_exact(H, psi0, times):
    m = np.asarray(H(times[0]), dtype=complex)
    dt = times - times[0]
    if H.hermitian:
        w, v = np.linalg.eigh(m)
        c = np.conj(v.T) @ psi0
        return (v @ (np.exp(-1j * np.outer(w, dt)) * c[:, None])).T
    return np.array([linalg.expm(-1j * m * s) @ psi0 for s in dt])


def _propagate_rk(H, psi0, times, rel_tol):
    def rhs(t, y):
        return -1j * (H(t) @ y)

    sol = integrate.solve_ivp(rhs, (times[0], times[-1]), psi0.astype(complex),
                              method="DOP853", t_eval=times, rtol=rel_tol,
                              atol=rel_tol * 1e-2)
    if sol.status != 0:
        last = float(sol.t[-1]) if sol.t.size else float(times[0])
        raise IntegrationFailure(f"Runge-Kutta integration failed: {sol.message}", last_time=last)
    return sol.y.T, int(sol.nfev)


def _propagate_magnus_pieces(H, psi0, times, rel_tol, max_steps, initial_steps, breakpoints):
    # endpoint-only propagation, refined independently on each piece
    cuts = sorted(b for b in set(breakpoints) if times[0] < b < times[-1])
    edges = [times[0], *cuts, times[-1]]
    psi, steps = psi0, 0
    for a, b in zip(edges[:-1], edges[1:]):
        states, n = _propagate_magnus(H, psi, np.array([a, b]), rel_tol, max_steps, initial_steps)
        psi, steps = states[-1], steps + n
    return np.array([psi0, psi]), steps


def propagate(H, psi0, grid, rel_tol=1e-10, method="auto", max_steps=2_000_000,
              initial_steps=None, breakpoints=()):
    """Integrate ``i d psi/dt = H(t) psi`` over ``grid``.

    Parameters
    ----------
    H : HamiltonianProvider
    psi0 : StateVector or array_like
    grid : TimeGrid
    rel_tol : float
        Target accuracy, in (0, 1e-3].
    method : {"auto", "magnus", "rk", "exact"}
    initial_steps : int, optional
        Coarsest Magnus grid tried before step doubling (a warm start for
        repeated runs of similar problems).
    breakpoints : sequence of float, optional
        Times where ``H`` changes character (pulse ramp edges).  When only
        the end state is requested, the Magnus grid is refined separately on
        each piece, so a thin fast region does not refine the whole span.

    Returns
    -------
    Trajectory
        States at ``grid.times``.
    """
    if not isinstance(psi0, StateVector):
        psi0 = StateVector(psi0, H.labels)
    if psi0.dim != H.dim:
        raise ContractViolation(f"state dimension {psi0.dim} != Hamiltonian dimension {H.dim}")
    if not 0 < rel_tol <= 1e-3:
        raise ContractViolation(f"rel_tol must lie in (0, 1e-3], got {rel_tol}")
    times = grid.times
    y0 = np.array(psi0.amplitudes, dtype=complex)
    if method == "auto":
        method = "exact" if H.constant else "magnus"
    if method == "exact":
        states, steps = _propagate_exact(H, y0, times), 1
    elif method == "magnus" and len(times) == 2 and len(breakpoints):
        states, steps = _propagate_magnus_pieces(H, y0, times, rel_tol, max_steps,
                                                 initial_steps, breakpoints)
    elif method == "magnus":
        states, steps = _propagate_magnus(H, y0, times, rel_tol, max_steps, initial_steps)
    elif method == "rk":
        states, steps = _propagate_rk(H, y0, times, rel_tol)
    else:
        raise ContractViolation(f"unknown method {method!r}")
    labels = psi0.basis_labels or H.labels
    return Trajectory(times, states, labels, method, steps)


def evolution_operator(H, t_start, t_end, rel_tol=1e-10):
    """Full propagator U(t_end, t_start) via the Magnus scheme (small dims only)."""
    grid = TimeGrid(t_start, t_end, 2)
    cols = [propagate(H, StateVector.basis(H.dim, j), grid, rel_tol, method="magnus").states[-1]
            for j in range(H.dim)]
    return np.array(cols).T


def integrate_populations(traj: Trajectory, indices: Sequence[int]):
    """Trapezoid integral over time of the summed populations at ``indices``."""
    pops = traj.populations()[:, list(indices)].sum(axis=1)
    return float(np.trapezoid(pops, traj.times))
