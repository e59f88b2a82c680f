"""Mollified local energy, its supremum over centres, and the velocity/displacement trackers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energy import potential_at_particles
from .initial_data import Ensemble
from .integrator import SimState

# mollifier matrix entries evaluated per chunk in q_sup
_CHUNK = 4_000_000


def mollifier_eval(r):
    """Cubic-smoothstep bump: 1 on [0, 1], 0 on [2, inf), ``1 - (3u^2 - 2u^3)`` with ``u = r - 1`` between.

    Its derivative lies in [-1.5, 0].
    """
    r = np.asarray(r, dtype=np.float64)
    u = np.clip(r - 1.0, 0.0, 1.0)
    out = 1.0 - u * u * (3.0 - 2.0 * u)
    return out if out.ndim else float(out)


def mollifier_derivative(r):
    r = np.asarray(r, dtype=np.float64)
    u = r - 1.0
    out = np.where((u > 0.0) & (u < 1.0), -6.0 * u * (1.0 - u), 0.0)
    return out if out.ndim else float(out)


def _energy_density(ens: Ensemble, softening: float) -> np.ndarray:
    # per-particle share: kinetic + half its interaction with everything else
    kin = 0.5 * ens.weight * np.einsum("ij,ij->i", ens.v, ens.v)
    return kin + 0.5 * ens.charge * potential_at_particles(ens, softening)


def local_energy(ens: Ensemble, mu, radius: float, softening: float) -> float:
    """``W(mu, R) = sum_p phi(|x_p - mu| / R) [w_p |v_p|^2 / 2 + q_p Phi_p / 2]``.

    ``Phi_p`` is the potential at particle p from all other particles, so the
    potential part is the pair sum with one leg localised by the mollifier.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(ens) == 0:
        return 0.0
    mu = np.asarray(mu, dtype=np.float64)
    d = np.sqrt(np.sum((ens.x - mu) ** 2, axis=1))
    return math.fsum((mollifier_eval(d / radius) * _energy_density(ens, softening)).tolist())


@dataclass(frozen=True)
class QSup:
    value: float
    argmax: np.ndarray
    n_centres: int
    spacing: float


def q_sup(ens: Ensemble, radius: float, softening: float, grid_spacing: float | None = None) -> QSup:
    """Largest local energy over a cubic lattice of centres.

    The lattice has spacing ``grid_spacing`` (default ``radius / 2``) and covers
    the bounding box of the particles inflated by ``2 * radius``, anchored at
    its lower corner.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    spacing = radius / 2.0 if grid_spacing is None else float(grid_spacing)
    if spacing > radius / 2.0 * (1 + 1e-12):
        raise ValueError("grid_spacing must not exceed radius / 2")
    if len(ens) == 0:
        return QSup(0.0, np.zeros(3), 0, spacing)
    dens = _energy_density(ens, softening)
    lo = ens.x.min(axis=0) - 2.0 * radius
    hi = ens.x.max(axis=0) + 2.0 * radius
    counts = np.floor((hi - lo) / spacing + 1e-9).astype(int) + 1
    axes = [lo[k] + spacing * np.arange(counts[k]) for k in range(3)]
    centres = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    rows = max(1, _CHUNK // len(ens))
    best, best_i = -math.inf, 0
    for start in range(0, len(centres), rows):
        c = centres[start:start + rows]
        d2 = (np.sum(c * c, axis=1)[:, None] - 2.0 * c @ ens.x.T
              + np.sum(ens.x * ens.x, axis=1)[None, :])
        d = np.sqrt(np.maximum(d2, 0.0))
        w = mollifier_eval(d / radius) @ dens
        i = int(np.argmax(w))
        if w[i] > best:
            best, best_i = float(w[i]), start + i
    return QSup(best, centres[best_i].copy(), len(centres), spacing)


@dataclass(frozen=True, eq=False)
class KinematicsRecord:
    """Running maximal velocity, displacement radius and per-particle field integrals.

    ``v_max`` is ``max(C3, sup_{s<=t} max_p |v_p(s)|)`` and
    ``r_disp = 1 + int_0^t v_max ds`` (trapezoidal rule).
    ``field_integral[p]`` approximates ``int_0^t |E(X_p(s), s)| ds`` with a
    left-endpoint rule on the stepper's own field values; ``last_field``
    holds ``|E|`` at time ``t`` for the next update.
    """

    t: float
    v_max: float
    r_disp: float
    field_integral: np.ndarray
    last_field: np.ndarray

    @property
    def max_field_integral(self) -> float:
        return float(np.max(self.field_integral)) if self.field_integral.size else 0.0

    @property
    def tau_ratio(self) -> float:
        """``log(max_p int |E| ds) / log(v_max)``; NaN while either log is undefined."""
        m = self.max_field_integral
        if m <= 0 or self.v_max <= 1:
            return math.nan
        return math.log(m) / math.log(self.v_max)

    def as_row(self) -> dict:
        return {"t": self.t, "v_max": self.v_max, "r_disp": self.r_disp,
                "max_field_integral": self.max_field_integral, "tau_ratio": self.tau_ratio}


def _max_speed(ens: Ensemble) -> float:
    if len(ens) == 0:
        return 0.0
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", ens.v, ens.v))))


def _field_mag(state: SimState) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", state.e_field, state.e_field))


def start_kinematics(state: SimState, floor: float = 1.0) -> KinematicsRecord:
    n = len(state.ensemble)
    return KinematicsRecord(state.t, max(floor, _max_speed(state.ensemble)), 1.0, np.zeros(n), _field_mag(state))


def track_kinematics(state: SimState, previous: KinematicsRecord, floor: float = 1.0) -> KinematicsRecord:
    """Advance ``previous`` to ``state.t``; call once per accepted step."""
    dt = state.t - previous.t
    v_max = max(previous.v_max, floor, _max_speed(state.ensemble))
    r_disp = previous.r_disp + 0.5 * (previous.v_max + v_max) * dt
    integral = previous.field_integral + previous.last_field * dt
    return KinematicsRecord(state.t, v_max, r_disp, integral, _field_mag(state))


KINEMATICS_COLUMNS = ["t", "v_max", "r_disp", "max_field_integral", "tau_ratio"]


def write_kinematics_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=KINEMATICS_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(row[k])) for k in KINEMATICS_COLUMNS})


def write_qsup_csv(rows, path) -> None:
    """Rows of ``(t, QSup)``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "Q", "mu_x", "mu_y", "mu_z"])
        for t, q in rows:
            w.writerow([repr(float(t)), repr(q.value), *(repr(float(c)) for c in q.argmax)])
