"""Pulse-shape search for the CZ condition.

Parameters are optimised in dimensionless form (times in units of
1/omega_eff) and mapped linearly onto the unit cube spanned by their bounds,
so a single optimum serves every gate speed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .dynamics import ContractViolation, IntegrationFailure
from .gate import DriveParams, PulseShape, gate_fidelity, run_gate

log = logging.getLogger(__name__)

PARAM_NAMES = ("ratio_peak", "width", "t_gate", "ratio_base")
DEFAULT_BOUNDS = {
    "ratio_peak": (0.1, 5.0),
    "width": (0.5, 6.0),
    "t_gate": (2.0, 15.0),
    "ratio_base": (0.0, 1.5),
}
PENALTY = 1e3
BLOCKADE_FACTOR = 1e6


def _params_of(pulse):
    rp, w, tg, rb = pulse.in_units()
    return {"ratio_peak": rp, "width": w, "t_gate": tg, "ratio_base": rb}


def _pulse_from(template, values):
    p = _params_of(template)
    p.update(values)
    return PulseShape.dimensionless(template.omega_eff, p["ratio_peak"], p["width"],
                                    p["t_gate"], p["ratio_base"], family=template.family,
                                    ramp=template.ramp_time * template.omega_eff)


@dataclass(frozen=True)
class OptimizationProblem:
    drive: DriveParams
    free_params: tuple = ("ratio_peak", "width", "t_gate", "ratio_base")
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    blockade_V: float | None = None  # rad/us; None -> 1e6 * omega_eff

    def __post_init__(self):
        free = tuple(self.free_params)
        if not free:
            raise ContractViolation("at least one free parameter is required")
        for name in free:
            if name not in PARAM_NAMES:
                raise ContractViolation(f"unknown parameter {name!r}")
            lo, hi = self.bounds.get(name, DEFAULT_BOUNDS[name])
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ContractViolation(f"bounds for {name} must be finite with lo <= hi")
        object.__setattr__(self, "free_params", free)
        object.__setattr__(self, "bounds", {n: tuple(self.bounds.get(n, DEFAULT_BOUNDS[n]))
                                            for n in free})

    def interaction(self, omega_eff):
        return BLOCKADE_FACTOR * omega_eff if self.blockade_V is None else self.blockade_V


@dataclass
class OptimizationResult:
    best_params: PulseShape
    infidelity: float
    iterations: int
    converged: bool
    history: list  # (dict of dimensionless params, objective)
    evaluations: int = 0
    flagged: list = field(default_factory=list)

    def incumbent_trace(self):
        return np.minimum.accumulate([h[1] for h in self.history])

    def history_rows(self):
        """CSV-ready rows ``(iteration, ratio_peak, width, t_gate, objective)``."""
        return [(k, p["ratio_peak"], p["width"], p["t_gate"], p["ratio_base"], f)
                for k, (p, f) in enumerate(self.history)]


def objective(drive, pulse, V, rel_tol=1e-6, initial_steps=None):
    """``1 - F`` of the phase-compensated, lossless, Doppler-free gate.

    Propagation failures and unphysical pulses give ``PENALTY``.
    """
    value, _ = _objective_flagged(drive, pulse, V, rel_tol, initial_steps)
    return value


def _objective_flagged(drive, pulse, V, rel_tol=1e-6, initial_steps=None):
    try:
        amps = run_gate(drive.lossless(), pulse, V, rel_tol=rel_tol, output_points=2,
                        initial_steps=initial_steps)
    except (IntegrationFailure, ContractViolation, FloatingPointError) as exc:
        log.warning("objective penalised at %s: %s", pulse.in_units(), exc)
        return PENALTY, False
    val = 1.0 - gate_fidelity(amps)
    if not math.isfinite(val):
        return PENALTY, False
    return max(val, 0.0), True


class _Stop(Exception):
    pass


def _descend(problem, initial, max_iters, f_stop, x_tol, f_tol, rel_tol, steps_hint):
    names = problem.free_params
    lo = np.array([problem.bounds[n][0] for n in names])
    hi = np.array([problem.bounds[n][1] for n in names])
    span = hi - lo
    fixed = span == 0
    start = _params_of(initial)
    x0 = np.array([start[n] for n in names])
    if np.any(x0 < lo - 1e-12) or np.any(x0 > hi + 1e-12):
        raise ContractViolation("initial pulse lies outside the bounds")
    z0 = np.where(fixed, 0.0, (x0 - lo) / np.where(fixed, 1.0, span))
    V = problem.interaction(initial.omega_eff)
    history, flagged = [], []

    def decode(z):
        z = np.clip(z, 0.0, 1.0)
        x = lo + span * z
        return dict(zip(names, x))

    def f(z):
        vals = decode(z)
        pulse = _pulse_from(initial, vals)
        val, ok = _objective_flagged(problem.drive, pulse, V, rel_tol, steps_hint)
        history.append((dict(_params_of(pulse)), val))
        if not ok:
            flagged.append(len(history) - 1)
        if val < f_stop:
            raise _Stop
        return val

    free = ~fixed
    if not np.any(free):
        try:
            f(z0)
        except _Stop:
            pass
        return _finish(initial, history, flagged, 0, True)
    zf0 = z0[free]

    def f_free(zf):
        z = z0.copy()
        z[free] = zf
        return f(z)

    k = zf0.size
    step = 0.05
    simplex = np.vstack([zf0] + [np.clip(zf0 + step * np.eye(k)[i], 0, 1)
                                 if zf0[i] + step <= 1 else zf0 - step * np.eye(k)[i]
                                 for i in range(k)])
    converged = False
    nit = 0
    try:
        res = minimize(f_free, zf0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * k,
                       options=dict(initial_simplex=simplex, xatol=x_tol, fatol=f_tol,
                                    maxiter=max_iters, maxfev=max_iters * 4))
        nit = int(res.nit)
        diam = float(np.max(np.abs(res.final_simplex[0] - res.final_simplex[0][0])))
        converged = diam <= x_tol
    except _Stop:
        converged = True
        nit = len(history)
    return _finish(initial, history, flagged, nit, converged)


def _finish(template, history, flagged, nit, converged):
    best_k = int(np.argmin([h[1] for h in history]))
    best_vals, best_f = history[best_k]
    best = _pulse_from(template, best_vals)
    return OptimizationResult(best, float(best_f), nit, converged, history,
                              evaluations=len(history), flagged=flagged)


def optimize(problem, initial, max_iters=600, starts=1, seed=0, f_stop=1e-8, x_tol=1e-6,
             f_tol=1e-8, rel_tol=1e-6, workers=1):
    """Nelder-Mead descent (optionally multi-start) on the compensated-gate infidelity.

    Parameters
    ----------
    problem : OptimizationProblem
    initial : PulseShape
        Seed; must lie within the bounds.  Its ``omega_eff`` sets the scale.
    max_iters : int
        Simplex iterations per descent.
    starts : int
        Number of descents; extra starts are drawn uniformly in the bounds
        from ``numpy.random.default_rng(seed)``.
    f_stop : float
        Stop a descent as soon as the objective drops below this value.
    x_tol, f_tol : float
        Simplex convergence: vertex spread in the unit cube of the bounds
        and objective spread; both must be met.

    Returns
    -------
    OptimizationResult
        Best descent; ties (objectives within 1e-9) go to the shortest gate.
    """
    if initial.omega_eff <= 0:
        raise ContractViolation("initial pulse needs omega_eff > 0")
    V = problem.interaction(initial.omega_eff)
    probe = run_gate(problem.drive.lossless(), initial, V, rel_tol=rel_tol, output_points=2) \
        if initial.t_gate > 0 else None
    hint = None
    if probe is not None and probe["11"].trajectory is not None:
        hint = max(32, probe["11"].trajectory.steps // 2)
    seeds = [initial]
    rng = np.random.default_rng(seed)
    for _ in range(max(0, starts - 1)):
        vals = {n: rng.uniform(*problem.bounds[n]) for n in problem.free_params}
        seeds.append(_pulse_from(initial, vals))

    def run(p):
        return _descend(problem, p, max_iters, f_stop, x_tol, f_tol, rel_tol, hint)

    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(p) for p in seeds]
    best_f = min(r.infidelity for r in results)
    ties = [r for r in results if r.infidelity <= best_f + 1e-9]
    best = min(ties, key=lambda r: r.best_params.t_gate)
    if len(results) > 1:
        history = [h for r in results for h in r.history]
        best = replace(best, history=history, evaluations=len(history),
                       iterations=sum(r.iterations for r in results))
    return best
