"""Global energy functionals, the field-energy identity and the energy-scaling check.

For the kernel ``x/|x|^3`` one has ``div E = 4 pi rho``, so the potential
energy ``(1/2) sum sum rho rho / |x - y|`` equals ``(1/8 pi) int |E|^2``;
the quadrature estimator carries that factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .config import CutoffConfig, NumericsConfig
from .field import coulomb, eval_field, merge_coincident, sphere_points
from .initial_data import Ensemble
from .scaling import fit_exponent

# denominators below this count as zero in relative residuals
RESIDUAL_FLOOR = 1e-300
# largest quadrature grid, in cells, before refusing
MAX_QUAD_CELLS = 256**3


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    potential_double_sum: float
    field_energy_quadrature: float = math.nan
    identity_residual: float = math.nan
    tail_correction: float = math.nan

    @property
    def total(self) -> float:
        return self.kinetic + self.potential_double_sum

    def as_row(self) -> dict:
        row = asdict(self)
        row["total"] = self.total
        return row


ENERGY_COLUMNS = ["t", "kinetic", "potential_double_sum", "field_energy_quadrature", "total",
                  "identity_residual", "tail_correction"]


def kinetic_energy(ens: Ensemble) -> float:
    """``(1/2) sum_p w_p |v_p|^2`` over all species, unweighted by charge."""
    if len(ens) == 0:
        return 0.0
    return 0.5 * math.fsum((ens.weight * np.einsum("ij,ij->i", ens.v, ens.v)).tolist())


def potential_at_particles(ens: Ensemble, softening: float) -> np.ndarray:
    """Potential at each particle from all *other* particles.

    Co-located particles are merged for the sum and the self term
    ``q_p / softening`` is removed afterwards; with zero softening coincident
    particles are rejected (their interaction is infinite).
    """
    if len(ens) == 0:
        return np.empty(0)
    q = ens.charge
    pos, qg, inverse = merge_coincident(ens.x, q)
    _, phi_g = coulomb(pos, qg, pos, softening, merge=False)
    if softening > 0:
        return phi_g[inverse] - q / softening
    if len(pos) != len(ens):
        raise ValueError("coincident particles need positive softening")
    return phi_g[inverse]


def potential_double_sum(ens: Ensemble, softening: float) -> float:
    """``(1/2) sum_{p != q} sigma_p sigma_q w_p w_q / sqrt(|x_p - x_q|^2 + eps^2)``."""
    if len(ens) == 0:
        return 0.0
    return 0.5 * math.fsum((ens.charge * potential_at_particles(ens, softening)).tolist())


def softening_floor(ens: Ensemble, softening: float) -> float:
    """Excluded self-pair energy ``(1/2) sum_p q_p^2 / eps``.

    Bounds how far below the (nonnegative) field energy of the softened
    charge distribution the pair sum can fall.
    """
    if len(ens) == 0:
        return 0.0
    return 0.5 * math.fsum((ens.charge**2).tolist()) / softening


def support_radius(cut: CutoffConfig, t: float, v_max: float) -> float:
    return cut.x_radius + v_max * t


def _ball_cells(r_box: float, n: int) -> np.ndarray:
    h = 2.0 * r_box / n
    axis = -r_box + (np.arange(n) + 0.5) * h
    gy, gz = np.meshgrid(axis, axis, indexing="ij")
    slabs = []
    for xval in axis:
        pts = np.stack([np.full(gy.size, xval), gy.ravel(), gz.ravel()], axis=1)
        slabs.append(pts[np.einsum("ij,ij->i", pts, pts) <= r_box * r_box])
    return np.concatenate(slabs)


def _sum_e2(ens: Ensemble, pts: np.ndarray, softening: float, chunk: int = 262_144) -> float:
    parts = []
    for start in range(0, len(pts), chunk):
        e = eval_field(ens, pts[start:start + chunk], softening).e_vec
        parts.append(math.fsum(np.einsum("ij,ij->i", e, e).tolist()))
    return math.fsum(parts)


def field_energy_quadrature(ens: Ensemble, num: NumericsConfig, cut: CutoffConfig, t: float,
                            v_max: float = 1.0, radius: float | None = None):
    """``(1/8 pi) int |E|^2`` by midpoint quadrature on a ball plus a monopole tail.

    The ball has radius ``quad_radius_factor * (N^beta + v_max t)`` unless
    ``radius`` is given, and is covered by ``quad_cells`` cells per diameter.
    With ``quad_refine = m > 1`` every cell whose centre lies within
    ``cell half-diagonal + 2 softening`` of a particle is split into ``m^3``
    subcells, resolving the softened cores; other cells keep one midpoint.
    Returns ``(value, tail_correction)``; ``value`` includes the tail
    ``Q_tot^2 / (2 R)``.
    """
    r_box = radius if radius is not None else num.quad_radius_factor * support_radius(cut, t, v_max)
    n, m = num.quad_cells, num.quad_refine
    if n**3 > MAX_QUAD_CELLS:
        raise MemoryError(f"quadrature grid {n}^3 exceeds {MAX_QUAD_CELLS} cells; lower quad_cells")
    if len(ens) == 0:
        return 0.0, 0.0
    h = 2.0 * r_box / n
    cells = _ball_cells(r_box, n)
    if m > 1:
        margin = 0.5 * math.sqrt(3.0) * h + 2.0 * num.softening
        dist, _ = cKDTree(ens.x).query(cells, k=1, distance_upper_bound=margin)
        near = np.isfinite(dist)
        if np.count_nonzero(near) * m**3 > MAX_QUAD_CELLS:
            raise MemoryError(f"refined quadrature exceeds {MAX_QUAD_CELLS} cells; lower quad_refine")
        off = (np.arange(m) + 0.5) * (h / m) - 0.5 * h
        sub = np.stack(np.meshgrid(off, off, off, indexing="ij"), axis=-1).reshape(-1, 3)
        fine = (cells[near][:, None, :] + sub[None, :, :]).reshape(-1, 3)
        integral = _sum_e2(ens, cells[~near], num.softening) * h**3 + _sum_e2(ens, fine, num.softening) * (h / m) ** 3
    else:
        integral = _sum_e2(ens, cells, num.softening) * h**3
    q_tot = ens.total_charge()
    tail = q_tot * q_tot / (2.0 * r_box)
    return integral / (8.0 * math.pi) + tail, tail


@dataclass(frozen=True)
class IdentityCheck:
    potential: float
    field_energy: float
    tail_correction: float
    residual: float
    radius: float
    surface_term: float
    surface_excess: float
    surface_bound: float

    @property
    def surface_ok(self) -> bool:
        """Non-monopole boundary flux below 5% of the energy."""
        scale = max(abs(self.potential), RESIDUAL_FLOOR)
        return self.surface_excess <= 0.05 * scale


def surface_flux(ens: Ensemble, radius: float, softening: float, n_points: int = 256):
    """``(1/8 pi) oint phi E . n dS`` on the sphere, and the crude bound ``max|E| max|phi| R^2 / 2``."""
    unit = sphere_points(n_points)
    sample = eval_field(ens, radius * unit, softening)
    radial = np.einsum("ij,ij->i", sample.e_vec, unit)
    flux = 4.0 * math.pi * radius**2 * float(np.mean(sample.phi * radial)) / (8.0 * math.pi)
    bound = float(np.max(sample.magnitude)) * float(np.max(np.abs(sample.phi))) * radius**2 / 2.0
    return flux, bound


def verify_identity(ens: Ensemble, num: NumericsConfig, cut: CutoffConfig, t: float,
                    v_max: float = 1.0, radius: float | None = None) -> IdentityCheck:
    """Compare the pair sum with the field-energy quadrature.

    The residual is ``|U - W| / max(|U|, floor)``. The boundary flux at the
    quadrature radius equals the monopole tail ``Q^2/(2R)`` for a charged
    ensemble, so its excess over that value measures what the tail correction
    misses.
    """
    pot = potential_double_sum(ens, num.softening)
    value, tail = field_energy_quadrature(ens, num, cut, t, v_max, radius)
    r_box = radius if radius is not None else num.quad_radius_factor * support_radius(cut, t, v_max)
    if len(ens) == 0:
        return IdentityCheck(pot, value, tail, 0.0, r_box, 0.0, 0.0, 0.0)
    flux, bound = surface_flux(ens, r_box, num.softening, num.sphere_points)
    residual = abs(pot - value) / max(abs(pot), RESIDUAL_FLOOR)
    return IdentityCheck(pot, value, tail, residual, r_box, flux, abs(flux - tail), bound)


def energy_report(ens: Ensemble, t: float, num: NumericsConfig, cut: CutoffConfig | None = None,
                  v_max: float = 1.0, quadrature: bool = False) -> EnergyReport:
    kin = kinetic_energy(ens)
    if not quadrature:
        return EnergyReport(t, kin, potential_double_sum(ens, num.softening))
    chk = verify_identity(ens, num, cut, t, v_max)
    return EnergyReport(t, kin, chk.potential, chk.field_energy, chk.residual, chk.tail_correction)


def write_energy_csv(reports, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ENERGY_COLUMNS)
        w.writeheader()
        for rep in reports:
            w.writerow({k: repr(float(v)) for k, v in rep.as_row().items()})


def read_energy_csv(path) -> list[EnergyReport]:
    names = [f.name for f in fields(EnergyReport)]
    with Path(path).open() as fh:
        return [EnergyReport(**{k: float(row[k]) for k in names}) for row in csv.DictReader(fh)]


@dataclass(frozen=True)
class EnergyScaling:
    slope: float
    r2: float
    kinetic_slope: float
    beta: float
    alpha: float | None
    nu: float | None

    @property
    def bound_exponent(self) -> float:
        return 3.0 * self.beta

    @property
    def interior_exponent(self) -> float | None:
        """``5 beta - 2 beta alpha + beta nu``; the far-field part of the potential bound, below ``3 beta``."""
        if self.alpha is None:
            return None
        return self.beta * (5.0 - 2.0 * self.alpha + self.nu)

    @property
    def passes(self) -> bool:
        return self.slope <= self.bound_exponent + 0.2


def verify_energy_scaling(runs, alpha: float | None = None) -> EnergyScaling:
    """Fit total and kinetic energy at ``t = 0`` against N.

    Parameters
    ----------
    runs : list of (CutoffConfig, EnergyReport)
        At least four distinct cutoffs sharing one ``beta``.
    alpha : float, optional
        Spatial decay exponent, used only to report the exponents of the bound
        (``nu`` defaults to ``min(1, 2 alpha - 2) / 2``).
    """
    runs = list(runs)
    if len(runs) < 4:
        raise ValueError(f"need at least 4 cutoffs, got {len(runs)}")
    ns = [cut.n_cut for cut, _ in runs]
    if len(set(ns)) != len(ns):
        raise ValueError("need distinct N")
    betas = {cut.beta for cut, _ in runs}
    if len(betas) != 1:
        raise ValueError("all runs must share beta")
    slope, r2 = fit_exponent((cut.n_cut, rep.total) for cut, rep in runs)
    kslope, _ = fit_exponent((cut.n_cut, rep.kinetic) for cut, rep in runs)
    nu = None if alpha is None else 0.5 * min(1.0, 2.0 * alpha - 2.0)
    return EnergyScaling(slope, r2, kslope, betas.pop(), alpha, nu)
