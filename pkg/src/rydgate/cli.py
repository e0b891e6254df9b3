"""Command-line entry point: ``python -m rydgate <subcommand> [options]``.

Each subcommand reads a JSON config (all defaults when omitted), writes a
CSV with plottable data and a ``summary.json`` holding scalar results, the
fully defaulted config echo, the package version and the wall time.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .analytic import (BeamSpec, adiabatic_amplitudes, blockade_radius, dipole_element,
                       power_to_rabi)
from .blockade import (InteractionModel, Sampler, SpinWaveProfile, leakage_phase_error,
                       pair_infidelity, spinwave_infidelity)
from .budget import CSV_COLUMNS, TransverseProfile, budget_point
from .config import ConfigError, parse_config
from .dynamics import ContractViolation, IntegrationFailure
from .gate import CONFIGS, PulseShape, gate_fidelity, phase_mismatch, run_gate
from .manifold import (ManifoldError, generate_synthetic_manifold, load_manifold, max_leakage,
                       vdw_leakage)
from .optimize import OptimizationProblem, optimize
from .units import TWO_PI

log = logging.getLogger("rydgate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "optimize", "budget", "blockade-scan", "manifold-scan", "power")


class NumericalFailure(RuntimeError):
    pass


class Job:
    """Output directory, thread cap and seed shared by the subcommands."""

    def __init__(self, cfg, out, threads=1, seed=0):
        self.cfg = cfg
        self.out = out
        self.threads = max(1, int(threads))
        self.seed = int(seed)
        self.fmt = cfg.section("output")["float_format"]
        self.files = []

    def map(self, fn, items):
        items = list(items)
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    def cell(self, v):
        if isinstance(v, (bool, np.bool_)):
            return str(int(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            if not math.isfinite(v):
                raise NumericalFailure(f"non-finite value {v} in CSV output")
            return format(float(v), self.fmt)
        return str(v)

    def write_csv(self, name, header, rows):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([self.cell(v) for v in row])
        self.files.append(name)
        return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# -- subcommands -----------------------------------------------------------

def cmd_simulate(job):
    cfg = job.cfg
    s = cfg.section("simulate")
    drive, pulse = cfg.drive, cfg.pulse
    dop = tuple(TWO_PI * 1e-3 * f for f in s["doppler_kHz"])
    if len(dop) != 2:
        raise ConfigError("needs two entries (atom a, atom b)", "simulate.doppler_kHz")
    d = drive if s["with_decay"] else drive.lossless()
    pulse.check_reachable(drive)
    amps = run_gate(d, pulse, cfg.interaction_V(), doppler=dop, with_decay=s["with_decay"],
                    rel_tol=s["rel_tol"], output_points=s["output_points"])
    times = amps["01"].trajectory.times
    header, cols = ["t_us", "ratio"], [times, pulse.ratio(times)]
    for c in ("01", "10", "11"):
        traj = amps[c].trajectory
        pops = traj.populations()
        for k, lab in enumerate(traj.basis_labels):
            header.append(f"P{c}_{lab}")
            cols.append(pops[:, k])
    if pulse.family == "constant":
        o1, o2 = (float(x) for x in pulse.rabi(0.0, drive.delta))
        c01, c0r = adiabatic_amplitudes(o1, o2, drive.delta, times)
        header += ["P01_1_adiabatic", "P01_r_adiabatic"]
        cols += [np.abs(c01) ** 2, np.abs(c0r) ** 2]
    job.write_csv("trajectory.csv", header, zip(*cols))
    phi01 = amps["01"].phase
    return {
        "fidelity": gate_fidelity(amps),
        "infidelity": 1.0 - gate_fidelity(amps),
        "phase_mismatch": phase_mismatch(amps),
        "phases": {c: amps[c].phase for c in CONFIGS},
        "populations": {c: abs(amps[c].return_amplitude) ** 2 for c in CONFIGS},
        "max_rydberg_population": {c: amps[c].max_rydberg_population for c in CONFIGS},
        "max_p_population": {c: amps[c].max_p_population for c in CONFIGS},
        "rydberg_time_us": {c: amps[c].rydberg_time for c in CONFIGS},
        "single_qubit_compensation": math.pi - phi01,
        "pulse_in_units": list(pulse.in_units()),
        "t_gate_us": pulse.t_gate,
    }


def cmd_optimize(job):
    cfg = job.cfg
    o = cfg.section("optimize")
    try:
        problem = OptimizationProblem(cfg.drive, free_params=tuple(o["free_params"]),
                                      blockade_V=cfg.interaction_V())
    except ContractViolation as exc:
        raise ConfigError(str(exc), "optimize.free_params") from exc
    res = optimize(problem, cfg.pulse, max_iters=o["max_iters"], starts=o["starts"],
                   seed=job.seed, f_stop=o["f_stop"], x_tol=o["x_tol"], f_tol=o["f_tol"],
                   rel_tol=o["rel_tol"],
                   workers=job.threads)
    job.write_csv("history.csv", ["evaluation", "ratio_peak", "width", "t_gate", "ratio_base",
                                  "objective"], res.history_rows())
    best = res.best_params
    check = run_gate(cfg.drive.lossless(), best, cfg.interaction_V(), rel_tol=1e-10,
                     output_points=2)
    rp, w, tg, rb = best.in_units()
    return {
        "best_pulse": {"ratio_peak": rp, "width_times_omega_eff": w,
                       "t_gate_times_omega_eff": tg, "ratio_base": rb,
                       "ramp_times_omega_eff": best.ramp_time * best.omega_eff},
        "t_gate_over_pi": tg / math.pi,
        "objective": res.infidelity,
        "infidelity": 1.0 - gate_fidelity(check),
        "phase_mismatch": phase_mismatch(check),
        "converged": res.converged,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "flagged": [str(f) for f in res.flagged],
    }


def cmd_budget(job):
    cfg = job.cfg
    b = cfg.section("budget")
    ratio = cfg.delta_over_omega_eff
    units = cfg.pulse.in_units()
    ramp = cfg.pulse.ramp_time * cfg.pulse.omega_eff
    spatial = (TransverseProfile(b["laser_width_over_rb"], b["profile_order"]),
               TransverseProfile(b["photon_width_over_rb"], b["profile_order"]))
    noise = tuple(b["noise_rms"])

    def point(f_mhz):
        oe = TWO_PI * f_mhz
        drive = replace(cfg.drive, delta=ratio * oe)
        pulse = PulseShape.dimensionless(oe, *units, family=cfg.pulse.family, ramp=ramp)
        return budget_point(drive, pulse, cfg.ensemble, cfg.c6, noise=noise, spatial=spatial,
                            quadrature_order=b["quadrature_order"],
                            V=cfg.sections["interaction"]["blockade_over_omega_eff"] * oe)

    results = job.map(point, b["omega_eff_MHz_grid"])
    flags = {format(r.omega_eff / TWO_PI, "g"): r.flags for r in results if r.flags}
    if flags:
        raise NumericalFailure(f"budget channels could not be evaluated: {flags}")
    job.write_csv("budget.csv", CSV_COLUMNS, [r.row() for r in results])
    return {
        "points": [{"omega_eff_MHz": r.omega_eff / TWO_PI, "R_b_um": r.blockade_radius,
                    "channels": r.channels, "total_fidelity": r.total_fidelity,
                    "extras": r.extras} for r in results],
    }


def cmd_blockade_scan(job):
    cfg = job.cfg
    s = cfg.section("blockade")
    inter = cfg.section("interaction")
    drive, pulse = cfg.drive, cfg.pulse
    R_b = blockade_radius(cfg.c6, pulse.omega_eff)
    model = InteractionModel.for_pulse(pulse.omega_eff, R_b, inter["anisotropy"], inter["mode"])
    sampler = Sampler(s["radial_nodes"], s["angular_nodes"], s["method"], s["mc_samples"],
                      job.seed)
    leak = s.get("leakage_output_points", 0)

    def row(d):
        out = [d, pair_infidelity(d, drive, pulse)]
        for shape in ("gaussian", "super_gaussian_10"):
            prof = SpinWaveProfile.from_diameter(shape, d, model.Rb_par, model.Rb_perp)
            out.append(float(spinwave_infidelity(prof, model, drive, pulse, sampler,
                                                 s["average"])))
            if leak:
                out.append(leakage_phase_error(prof, model, drive, pulse, sampler,
                                               output_points=leak))
        return out

    header = ["d_over_rb", "pair_error", "gaussian_error"]
    if leak:
        header += ["gaussian_leakage_error", "super_gaussian_error", "super_gaussian_leakage_error"]
    else:
        header += ["super_gaussian_error"]
    rows = job.map(row, s["d_over_rb_grid"])
    job.write_csv("blockade.csv", header, rows)
    return {"R_b_um": R_b, "rows": [dict(zip(header, r)) for r in rows]}


def cmd_manifold_scan(job):
    m = job.cfg.section("manifold")
    if m["file"]:
        manifold = load_manifold(m["file"])
    else:
        manifold = generate_synthetic_manifold(job.seed, m["synthetic_n_pairs"],
                                               TWO_PI * m["synthetic_detuning_MHz"],
                                               TWO_PI * m["synthetic_c3_MHz_um3"])
    omega = TWO_PI * m["omega_MHz"]
    c6 = manifold.effective_c6()
    radii = np.linspace(m["r_min_um"], m["r_max_um"], int(m["points"]))
    pts = m["output_points"]

    def row(R):
        return [R, max_leakage(manifold, omega, R, pts), vdw_leakage(c6, omega, R, pts)]

    rows = job.map(row, radii)
    job.write_csv("manifold.csv", ["R_um", "max_leakage_manifold", "max_leakage_vdw"], rows)
    return {"n_pairs": manifold.size, "effective_c6_MHz_um6": c6 / TWO_PI,
            "source": m["file"] or f"synthetic(seed={job.seed})"}


def cmd_power(job):
    p = job.cfg.section("power")
    beam = BeamSpec(p["power_W"], p["waist_um"], p["profile_order"], p["wavelength_nm"] * 1e-3)
    d = dipole_element(p["principal_n"], p["transition"])
    omega = power_to_rabi(beam, d)
    job.write_csv("power.csv", ["power_W", "waist_um", "profile_order", "dipole_a0",
                                "omega_rad_us", "omega_2pi_MHz"],
                  [[beam.power, beam.waist, beam.profile_order, d, omega, omega / TWO_PI]])
    print(f"Omega = 2pi x {omega / TWO_PI:.6g} MHz = {omega:.6g} rad/us")
    return {"dipole_a0": d, "omega_rad_us": omega, "omega_2pi_MHz": omega / TWO_PI,
            "omega_2pi_GHz": omega / TWO_PI / 1e3}


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "budget": cmd_budget,
            "blockade-scan": cmd_blockade_scan, "manifold-scan": cmd_manifold_scan,
            "power": cmd_power}

# subcommand flags mapped onto config keys
_FLAG_KEYS = {
    "manifold-scan": [("--file", "manifold.file", str), ("--omega", "manifold.omega_MHz", float),
                      ("--rmin", "manifold.r_min_um", float), ("--rmax", "manifold.r_max_um", float),
                      ("--points", "manifold.points", int)],
    "power": [("--watts", "power.power_W", float), ("--waist-um", "power.waist_um", float),
              ("--order", "power.profile_order", int), ("--transition", "power.transition", str),
              ("--n", "power.principal_n", int)],
}


def build_parser():
    parser = argparse.ArgumentParser(prog="rydgate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker cap for sweeps")
        p.add_argument("--seed", type=int, default=0, help="seed for random draws")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config key (value parsed as JSON when possible)")
        p.add_argument("-v", "--verbose", action="store_true")
        for flag, key, typ in _FLAG_KEYS.get(name, []):
            p.add_argument(flag, type=typ, dest=key, default=None, help=f"sets {key}")
    return parser


def _overrides(args):
    out = []
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not SECTION.KEY=VALUE")
        out.append((key.strip(), value))
    for _, key, _ in _FLAG_KEYS.get(args.command, []):
        v = getattr(args, key, None)
        if v is not None:
            out.append((key, v))
    return out


def _error_payload(kind, command, exc):
    payload = {"status": "error", "kind": kind, "command": command, "message": str(exc),
               "version": __version__}
    for attr in ("key", "line", "last_time"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return payload


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    code, payload = EXIT_OK, None
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        payload = _error_payload("io", args.command, exc)
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(args.config, _overrides(args))
        job = Job(cfg, args.out, args.threads, args.seed)
        result = COMMANDS[args.command](job)
        payload = {"status": "ok", "command": args.command, "version": __version__,
                   "seed": job.seed, "threads": job.threads, "files": job.files,
                   "result": result, "config": cfg.echo()}
    except (ConfigError, ManifoldError) as exc:
        code, payload = EXIT_CONFIG, _error_payload("config", args.command, exc)
    except OSError as exc:
        code, payload = EXIT_IO, _error_payload("io", args.command, exc)
    except (IntegrationFailure, NumericalFailure, ContractViolation, FloatingPointError,
            RuntimeError, ValueError) as exc:
        code, payload = EXIT_NUMERIC, _error_payload("numerical", args.command, exc)
    payload["wall_time_s"] = time.perf_counter() - start
    name = "summary.json" if code == EXIT_OK else "error.json"
    try:
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(json.dumps(_jsonable(_error_payload("io", args.command, exc))), file=sys.stderr)
        return EXIT_IO
    if code != EXIT_OK:
        print(json.dumps(_jsonable(payload)), file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
