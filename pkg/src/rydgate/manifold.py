"""Blockade leakage with a dipole-coupled manifold of Rydberg pairs.

Two two-level atoms are driven from ``|gg>`` through the symmetric single
excitation ``|r0 g+>`` into the target pair ``|r0 r0>``, which is coupled
by ``C3/R^3`` terms to other pair states ``|ri rj>`` detuned by ``delta_ij``.
The basis is ``(|gg>, |r0 g+>, pair_1, ..., pair_n)``; antisymmetric single
excitations are never driven and are left out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ContractViolation, HamiltonianProvider, StateVector, TimeGrid, propagate
from .units import TWO_PI


class ManifoldError(ContractViolation):
    """Malformed or inconsistent manifold data."""


@dataclass(frozen=True)
class PairManifold:
    """Pair states and dipolar couplings; rates in rad/us, C3 in rad/us um^3."""

    ids: tuple
    labels: tuple
    deltas: np.ndarray
    couplings: tuple  # ((id_a, id_b, C3), ...)
    target_id: object
    theta: float = 0.0  # rad
    target_shift: float = 0.0  # rad/us, effective shift of the target (vdW reduction)

    def __post_init__(self):
        ids = tuple(self.ids)
        if len(set(ids)) != len(ids):
            raise ManifoldError("pair ids must be unique")
        if len(self.labels) != len(ids) or len(self.deltas) != len(ids):
            raise ManifoldError("pairs, labels and detunings differ in length")
        d = np.asarray(self.deltas, dtype=float).copy()
        d.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "deltas", d)
        if self.target_id not in ids:
            raise ManifoldError(f"target pair {self.target_id!r} is missing")
        if d[ids.index(self.target_id)] != 0:
            raise ManifoldError("the target pair must have zero detuning")
        seen = {}
        known = set(ids)
        for a, b, c3 in self.couplings:
            for ref in (a, b):
                if ref not in known:
                    raise ManifoldError(f"coupling references unknown pair id {ref!r}")
            if a == b:
                raise ManifoldError(f"self-coupling on pair {a!r}")
            if not math.isfinite(c3):
                raise ManifoldError(f"non-finite C3 between {a!r} and {b!r}")
            key = frozenset((a, b))
            if key in seen:
                if seen[key] != c3:
                    raise ManifoldError(f"conflicting duplicate coupling ({a!r}, {b!r})")
                raise ManifoldError(f"duplicate coupling ({a!r}, {b!r})")
            seen[key] = c3

    @property
    def size(self):
        return len(self.ids)

    @property
    def target_index(self):
        return self.ids.index(self.target_id)

    def effective_c6(self):
        """Second-order van der Waals coefficient of the target pair, ``-sum C3^2/delta``."""
        t = self.target_id
        c6 = 0.0
        for a, b, c3 in self.couplings:
            if t in (a, b):
                other = b if a == t else a
                c6 -= c3 ** 2 / self.deltas[self.ids.index(other)]
        return c6

    def scaled(self, s):
        """All detunings and C3 values multiplied by ``s``."""
        return PairManifold(self.ids, self.labels, s * self.deltas,
                            tuple((a, b, s * c) for a, b, c in self.couplings),
                            self.target_id, self.theta, s * self.target_shift)


def single_pair(shift=0.0):
    """Manifold holding only the target pair, shifted by ``shift`` (rad/us).

    With ``shift = C6/R^6`` this is the van der Waals reduction.
    """
    return PairManifold((0,), ("r0r0",), np.zeros(1), (), 0, target_shift=shift)


def _matrix(manifold, omega, R):
    c = omega / math.sqrt(2.0)
    n, t = manifold.size, manifold.target_index
    diag = np.array(manifold.deltas, dtype=float)
    diag[t] += manifold.target_shift
    index = {pid: k for k, pid in enumerate(manifold.ids)}
    offd = [(index[a], index[b], c3 / R ** 3) for a, b, c3 in manifold.couplings]
    h = np.zeros((n + 2, n + 2))
    h[0, 1] = h[1, 0] = c
    h[1, 2 + t] = h[2 + t, 1] = c
    h[2 + np.arange(n), 2 + np.arange(n)] = diag
    for i, j, v in offd:
        h[2 + i, 2 + j] += v
        h[2 + j, 2 + i] += v
    return h


def leakage_trajectory(manifold, omega, R, output_points=4001):
    """Times (us) and double-excitation population over one ``2pi`` rotation.

    The ground state couples to ``|r0 g+>`` with ``omega/sqrt(2)``, so the
    two-level Rabi frequency is ``sqrt(2) omega`` and the window is
    ``2 pi / (sqrt(2) omega)``.
    """
    if not omega > 0:
        raise ContractViolation("omega must be > 0")
    if not R > 0:
        raise ContractViolation("R must be > 0")
    h = _matrix(manifold, omega, R)
    H = HamiltonianProvider.from_matrix(h)
    t_end = TWO_PI / (math.sqrt(2.0) * omega)
    try:
        traj = propagate(H, StateVector.basis(h.shape[0], 0), TimeGrid(0.0, t_end, output_points))
    except Exception as exc:  # eigensolver failures are reported with the geometry
        raise RuntimeError(f"manifold propagation failed at R={R:g} um, omega={omega:g}: {exc}") \
            from exc
    pops = traj.populations()[:, 2:].sum(axis=1)
    return traj.times, pops


def max_leakage(manifold, omega, R, output_points=4001):
    """Maximum total pair-state population during a ``2pi`` rotation."""
    _, pops = leakage_trajectory(manifold, omega, R, output_points)
    return float(np.clip(pops.max(), 0.0, 1.0))


def vdw_leakage(c6, omega, R, output_points=4001):
    """:func:`max_leakage` of the single shifted pair with ``delta = C6/R^6``."""
    return max_leakage(single_pair(c6 / R ** 6), omega, R, output_points)


def generate_synthetic_manifold(seed, n_pairs, detuning_scale, c3_scale, direct_fraction=None,
                                extra_links=2):
    """Random stand-in for a computed pair manifold.

    Non-target detunings have random sign and magnitude drawn from an
    exponential distribution of mean ``detuning_scale``.  Each non-target
    pair couples to the target with probability ``direct_fraction``
    (default: about 20 direct partners) and to ``extra_links`` random other
    pairs.  C3 values are normal with standard deviation ``c3_scale``.
    """
    if n_pairs < 1:
        raise ContractViolation("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    ids = tuple(range(n_pairs))
    labels = ("r0r0",) + tuple(f"p{k}" for k in range(1, n_pairs))
    mags = rng.exponential(detuning_scale, n_pairs - 1)
    mags[mags == 0] = detuning_scale
    deltas = np.concatenate([[0.0], mags * rng.choice([-1.0, 1.0], n_pairs - 1)])
    if n_pairs == 1:
        return PairManifold(ids, labels, deltas, (), 0)
    if direct_fraction is None:
        direct_fraction = min(1.0, 20.0 / (n_pairs - 1))
    pairs = {}
    for k in range(1, n_pairs):
        if rng.uniform() < direct_fraction:
            pairs[(0, k)] = c3_scale * rng.standard_normal()
        if n_pairs > 2:
            for other in rng.choice(np.arange(1, n_pairs), size=min(extra_links, n_pairs - 2),
                                    replace=False):
                key = (min(k, int(other)), max(k, int(other)))
                if key[0] != key[1] and key not in pairs:
                    pairs[key] = c3_scale * rng.standard_normal()
    if not any(0 in key for key in pairs):
        pairs[(0, 1)] = c3_scale * rng.standard_normal()
    couplings = tuple((a, b, c) for (a, b), c in sorted(pairs.items()))
    return PairManifold(ids, labels, deltas, couplings, 0)


def manifold_to_json(manifold):
    return {
        "pairs": [{"id": pid, "label": lab, "delta_MHz": float(d) / TWO_PI}
                  for pid, lab, d in zip(manifold.ids, manifold.labels, manifold.deltas)],
        "couplings": [{"a": a, "b": b, "c3_MHz_um3": c / TWO_PI} for a, b, c in manifold.couplings],
        "target_id": manifold.target_id,
        "theta_deg": math.degrees(manifold.theta),
    }


def _require(obj, key, where):
    if key not in obj:
        raise ManifoldError(f"{where}: missing key {key!r}")
    return obj[key]


def parse_manifold(text):
    """Build a manifold from JSON text; see :func:`load_manifold`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifoldError(f"line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ManifoldError("top level must be an object")
    pairs = _require(data, "pairs", "manifold")
    ids, labels, deltas = [], [], []
    for k, p in enumerate(pairs):
        where = f"pairs[{k}]"
        ids.append(_require(p, "id", where))
        labels.append(str(p.get("label", ids[-1])))
        deltas.append(TWO_PI * float(_require(p, "delta_MHz", where)))
    couplings = []
    for k, c in enumerate(data.get("couplings", [])):
        where = f"couplings[{k}]"
        couplings.append((_require(c, "a", where), _require(c, "b", where),
                          TWO_PI * float(_require(c, "c3_MHz_um3", where))))
    return PairManifold(tuple(ids), tuple(labels), np.array(deltas, dtype=float),
                        tuple(couplings), _require(data, "target_id", "manifold"),
                        math.radians(float(data.get("theta_deg", 0.0))))


def load_manifold(path):
    """Read a manifold file.

    JSON object with ``pairs`` (list of ``{id, label, delta_MHz}``),
    ``couplings`` (list of ``{a, b, c3_MHz_um3}``), ``target_id`` and
    ``theta_deg``.  Frequencies are in MHz (cycles) and converted to rad/us.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_manifold(fh.read())


def save_manifold(manifold, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifold_to_json(manifold), fh, indent=1)
