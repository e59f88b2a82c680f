"""Deterministic phase-space lattice discretisation of truncated initial data.

Cell centres sit at half-integer multiples of the spacing, anchored at the
origin and independent of the cutoff, so the particle set for a cutoff N is a
subset of the set for any N' > N. Truncation to ``|x| <= N**beta`` and
``|v| <= N`` is sharp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .config import ConfigError, CutoffConfig, NumericsConfig, SpeciesParams

SNAPSHOT_VERSION = 1

Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Particle(NamedTuple):
    species: int
    x: np.ndarray
    v: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted characteristics stored as parallel arrays.

    ``weight`` is the phase-space mass ``f0(x0, v0) * dx**3 * dv**3`` and never
    changes; ``x`` and ``v`` are the current phase-space point. ``cell_volume``
    converts weights back to distribution values.
    """

    species: tuple[SpeciesParams, ...]
    sid: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    x: np.ndarray
    v: np.ndarray
    weight: np.ndarray
    cell_volume: float = 1.0

    def __post_init__(self):
        n = self.sid.shape[0]
        for name in ("x0", "v0", "x", "v"):
            if getattr(self, name).shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3)")
        if self.weight.shape != (n,):
            raise ValueError(f"weight must have shape ({n},)")
        if np.any(self.weight < 0):
            raise ValueError("particle weights must be nonnegative")
        ids = {s.id for s in self.species}
        if len(ids) != len(self.species):
            raise ValueError("duplicate species ids")
        if n and not set(np.unique(self.sid).tolist()) <= ids:
            raise ValueError("particle references an unknown species id")

    @classmethod
    def from_arrays(cls, species, sid, x, v, weight, cell_volume=1.0):
        """Build an ensemble whose initial point equals its current point."""
        sid = np.asarray(sid, dtype=np.int64).reshape(-1)
        x = np.array(x, dtype=np.float64).reshape(-1, 3)
        v = np.array(v, dtype=np.float64).reshape(-1, 3)
        weight = np.array(weight, dtype=np.float64).reshape(-1)
        species = tuple(sorted(species, key=lambda s: s.id))
        return cls(species, sid, x.copy(), v.copy(), x, v, weight, float(cell_volume))

    @classmethod
    def empty(cls, species):
        return cls.from_arrays(species, [], np.empty((0, 3)), np.empty((0, 3)), [])

    def __len__(self):
        return self.sid.shape[0]

    def particles(self) -> Iterator[Particle]:
        for i in range(len(self)):
            yield Particle(int(self.sid[i]), self.x[i], self.v[i], self.x0[i], self.v0[i], float(self.weight[i]))

    @property
    def sigma(self) -> np.ndarray:
        """Charge per unit mass of every particle."""
        table = {s.id: s.sigma for s in self.species}
        lookup = np.array([table[i] for i in sorted(table)]) if table else np.empty(0)
        ids = np.array(sorted(table), dtype=np.int64)
        return lookup[np.searchsorted(ids, self.sid)] if len(self) else np.empty(0)

    @property
    def charge(self) -> np.ndarray:
        return self.sigma * self.weight

    def masses(self) -> dict[int, float]:
        return {s.id: float(math.fsum(self.weight[self.sid == s.id])) for s in self.species}

    def signed_charges(self) -> dict[int, float]:
        return {s.id: s.sigma * m for s, m in zip(self.species, self.masses().values())}

    def total_charge(self) -> float:
        return math.fsum(self.signed_charges().values())

    def unsigned_charge(self) -> float:
        """Sum over species of ``|sigma_i| * M_i`` (the integral of |rho| summed per species)."""
        return math.fsum(abs(q) for q in self.signed_charges().values())

    def with_state(self, x, v) -> "Ensemble":
        return Ensemble(self.species, self.sid, self.x0, self.v0, x, v, self.weight, self.cell_volume)

    def select(self, mask) -> "Ensemble":
        mask = np.asarray(mask)
        return Ensemble(self.species, self.sid[mask], self.x0[mask], self.v0[mask],
                        self.x[mask], self.v[mask], self.weight[mask], self.cell_volume)

    @staticmethod
    def concat(*parts: "Ensemble") -> "Ensemble":
        if not parts:
            raise ValueError("nothing to concatenate")
        species = {}
        for part in parts:
            for s in part.species:
                if species.setdefault(s.id, s) != s:
                    raise ValueError(f"conflicting definitions for species {s.id}")
        vols = {p.cell_volume for p in parts if len(p)}
        if len(vols) > 1:
            raise ValueError("cannot concatenate ensembles with different cell volumes")
        return Ensemble(
            tuple(species[k] for k in sorted(species)),
            np.concatenate([p.sid for p in parts]),
            np.concatenate([p.x0 for p in parts]),
            np.concatenate([p.v0 for p in parts]),
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.v for p in parts]),
            np.concatenate([p.weight for p in parts]),
            vols.pop() if vols else parts[0].cell_volume,
        )


def default_profile(species: SpeciesParams) -> Profile:
    """The envelope ``c1 exp(-lambda |v|^2) (1 + |x - offset|)^-alpha`` itself.

    The returned callable broadcasts over leading axes of ``x`` and ``v``.
    """
    c1, lam, alpha = species.c1, species.lambda_, species.alpha
    offset = np.asarray(species.offset)

    def profile(x, v):
        x = np.asarray(x, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        r = np.sqrt(np.sum((x - offset) ** 2, axis=-1))
        return c1 * np.exp(-lam * np.sum(v * v, axis=-1)) * (1.0 + r) ** (-alpha)

    return profile


def lattice_ball(radius: float, spacing: float) -> np.ndarray:
    """Cell centres ``(k + 1/2) * spacing`` inside the closed ball, lexicographic order."""
    kmax = int(math.floor(radius / spacing + 0.5))
    axis = (np.arange(-kmax, kmax) + 0.5) * spacing
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid[np.einsum("ij,ij->i", grid, grid) <= radius * radius]


# rows of (spatial node x velocity node) evaluated per chunk
_CHUNK = 2_000_000


def _scan(profile, cut, num):
    """Yield ``(spatial index, velocity index, f)`` chunks of surviving lattice nodes."""
    xs = lattice_ball(cut.x_radius, num.dx)
    vs = lattice_ball(cut.v_radius, num.dv)
    if len(xs) == 0 or len(vs) == 0:
        return xs, vs, 0.0, iter(())
    rows = max(1, _CHUNK // len(vs))
    fmax = 0.0
    for start in range(0, len(xs), rows):
        f = profile(xs[start:start + rows, None, :], vs[None, :, :])
        fmax = max(fmax, float(np.max(f)))
    if np.any(~np.isfinite(fmax)) or fmax < 0:
        raise ValueError("profile must be finite and nonnegative")
    threshold = num.weight_floor * fmax

    def chunks():
        for start in range(0, len(xs), rows):
            f = profile(xs[start:start + rows, None, :], vs[None, :, :])
            if np.any(f < 0):
                raise ValueError("profile must be nonnegative")
            keep = (f > 0) & (f >= threshold)
            ix, iv = np.nonzero(keep)
            yield ix + start, iv, f[ix, iv]

    return xs, vs, fmax, chunks()


def lattice_mass(profile: Profile, cut: CutoffConfig, num: NumericsConfig) -> float:
    """Total phase-space mass of the lattice ``grid_particles`` would build, without materialising it."""
    _, _, _, chunks = _scan(profile, cut, num)
    cell = num.dx**3 * num.dv**3
    return math.fsum(math.fsum(f.tolist()) for _, _, f in chunks) * cell


def grid_particles(profile: Profile, species: SpeciesParams, cut: CutoffConfig,
                   num: NumericsConfig) -> Ensemble:
    """Midpoint-rule particles for one species' truncated initial density.

    Raises
    ------
    ConfigError
        If the lattice would exceed ``num.max_particles`` particles.
    """
    xs, vs, _, chunks = _scan(profile, cut, num)
    parts = list(chunks)
    count = sum(len(f) for _, _, f in parts)
    if count > num.max_particles:
        factor = (count / num.max_particles) ** (1 / 6)
        raise ConfigError(
            f"species {species.id}: {count} particles exceed max_particles={num.max_particles}; "
            f"coarsen dx and dv by about {factor:.2f}x (e.g. dx={num.dx * factor:.3g}, dv={num.dv * factor:.3g})"
        )
    cell = num.dx**3 * num.dv**3
    if count == 0:
        ens = Ensemble.empty((species,))
        return Ensemble(ens.species, ens.sid, ens.x0, ens.v0, ens.x, ens.v, ens.weight, cell)
    ix = np.concatenate([p[0] for p in parts])
    iv = np.concatenate([p[1] for p in parts])
    f = np.concatenate([p[2] for p in parts])
    return Ensemble.from_arrays((species,), np.full(count, species.id), xs[ix], vs[iv], f * cell, cell)


def build_ensemble(species: tuple[SpeciesParams, ...], cut: CutoffConfig, num: NumericsConfig,
                   profiles: dict[int, Profile] | None = None) -> Ensemble:
    """Grid every species (default envelope profile unless overridden) and concatenate."""
    profiles = profiles or {}
    parts = [grid_particles(profiles.get(s.id) or default_profile(s), s, cut, num) for s in species]
    ens = Ensemble.concat(*parts)
    if len(ens) > num.max_particles:
        raise ConfigError(f"{len(ens)} particles exceed max_particles={num.max_particles}; coarsen dx/dv")
    return ens


def uniform_ball(charge: float, radius: float, cells_per_radius: int, sigma: float = 1.0) -> Ensemble:
    """Equal-weight lattice particles filling a ball, normalised to total ``charge``.

    All velocities are zero. Used as a closed-form test configuration for
    the energy estimators.
    """
    spacing = radius / cells_per_radius
    pos = lattice_ball(radius, spacing)
    sp = SpeciesParams(id=0, sigma=sigma, c1=1.0, lambda_=1.0, alpha=2.0)
    w = np.full(len(pos), charge / (sigma * len(pos)))
    return Ensemble.from_arrays((sp,), np.zeros(len(pos)), pos, np.zeros_like(pos), w, spacing**3)


def save_snapshot(ens: Ensemble, path) -> None:
    """Write ``(species, x0, v0, weight)`` rows as CSV behind a versioned header."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# partialvp-ensemble v{SNAPSHOT_VERSION} cell_volume={ens.cell_volume!r}\n")
        fh.write("species,x0,y0,z0,vx0,vy0,vz0,weight\n")
        for i in range(len(ens)):
            vals = [*ens.x0[i], *ens.v0[i], ens.weight[i]]
            fh.write(f"{int(ens.sid[i])}," + ",".join(repr(float(a)) for a in vals) + "\n")


def load_snapshot(path, species: tuple[SpeciesParams, ...]) -> Ensemble:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) < 3 or header[1] != "partialvp-ensemble" or header[2] != f"v{SNAPSHOT_VERSION}":
            raise ValueError(f"{path}: not a v{SNAPSHOT_VERSION} ensemble snapshot")
        cell_volume = float(header[3].split("=", 1)[1])
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.size == 0:
        data = np.empty((0, 8))
    return Ensemble.from_arrays(species, data[:, 0].astype(np.int64), data[:, 1:4], data[:, 4:7],
                                data[:, 7], cell_volume)
