"""Coulomb field and potential of a signed particle ensemble, plus analytic bounds.

Conventions: the kernel is ``(x - y) / |x - y|^3`` with Plummer softening,
so ``E = -grad(phi)`` and ``div E = 4 pi rho``. A source coinciding with a
target contributes nothing to ``E`` (the softened kernel is odd) and
``q / softening`` to ``phi``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate

from . import _backend
from .config import CutoffConfig
from .initial_data import Ensemble


@dataclass(frozen=True)
class FieldSample:
    """Field ``e_vec`` and potential ``phi`` at each of ``points`` (batched)."""

    points: np.ndarray
    e_vec: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.e_vec, self.e_vec))


def merge_coincident(pos: np.ndarray, q: np.ndarray):
    """Combine sources sharing a position exactly (bitwise) into one charge.

    Exact for the field at any target. Returns ``(positions, charges, inverse)``
    where ``inverse`` maps each input source to its merged index.
    """
    if len(pos) == 0:
        return pos, q, np.empty(0, dtype=np.int64)
    uniq, inverse = np.unique(pos, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return uniq, np.bincount(inverse, weights=q, minlength=len(uniq)), inverse


def coulomb(src_pos, src_q, targets, softening, merge=True):
    """Raw kernel call: ``(E, phi)`` arrays at ``targets`` from point charges."""
    src_pos = np.asarray(src_pos, dtype=np.float64).reshape(-1, 3)
    src_q = np.asarray(src_q, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    if merge:
        src_pos, src_q, _ = merge_coincident(src_pos, src_q)
    s = np.ascontiguousarray(src_pos.T)
    t = np.ascontiguousarray(targets.T)
    ex, ey, ez, phi = _backend.coulomb_field(t[0], t[1], t[2], s[0], s[1], s[2],
                                             np.ascontiguousarray(src_q), float(softening) ** 2)
    return np.stack([ex, ey, ez], axis=1), phi


def eval_field(ens: Ensemble, targets, softening: float) -> FieldSample:
    """Softened field and potential of ``ens`` at ``targets``.

    ``E(x) = sum_p sigma_p w_p (x - x_p) / (|x - x_p|^2 + eps^2)^{3/2}`` and
    ``phi(x) = sum_p sigma_p w_p / (|x - x_p|^2 + eps^2)^{1/2}``, summed in a
    fixed order with compensated accumulation.
    """
    if softening < 0:
        raise ValueError("softening must be nonnegative")
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    e_vec, phi = coulomb(ens.x, ens.charge, targets, softening)
    return FieldSample(targets, e_vec, phi)


def field_at_particles(ens: Ensemble, softening: float) -> FieldSample:
    """Field at every particle's current position (self-interaction contributes 0 to E)."""
    return eval_field(ens, ens.x, softening)


# ---------------------------------------------------------------------------
# Analytic bound on |E^N(x, 0)| from the Hoelder splitting.


@lru_cache(maxsize=None)
def _holder_near(p: float, q: float) -> float:
    # [int_{|z|<=1} 1]^{1/p} [int_{|z|<=1} |z|^{-2q}]^{1/q}, needs q < 3/2
    ball = 4.0 * math.pi / 3.0
    kern, _ = integrate.quad(lambda r: 4.0 * math.pi * r ** (2.0 - 2.0 * q), 0.0, 1.0)
    return ball ** (1.0 / p) * kern ** (1.0 / q)


@lru_cache(maxsize=None)
def _holder_far(alpha: float, p: float, q: float) -> float:
    # [int_{R^3} (1+|y|)^{-alpha p}]^{1/p} [int_{|z|>1} |z|^{-2q}]^{1/q}, needs q > 3/2, alpha p > 3
    dens, _ = integrate.quad(lambda r: 4.0 * math.pi * r * r * (1.0 + r) ** (-alpha * p), 0.0, np.inf)
    kern, _ = integrate.quad(lambda r: 4.0 * math.pi * r ** (2.0 - 2.0 * q), 1.0, np.inf)
    return dens ** (1.0 / p) * kern ** (1.0 / q)


@lru_cache(maxsize=None)
def truncated_mass_integral(alpha: float, radius: float) -> float:
    """``int_{|y| <= radius} (1 + |y|)^-alpha dy`` by radial quadrature."""
    val, _ = integrate.quad(lambda r: 4.0 * math.pi * r * r * (1.0 + r) ** (-alpha), 0.0, radius)
    return val


@dataclass(frozen=True)
class FieldBound:
    alpha: float
    beta: float
    n_cut: float
    c_near: float
    c_far: float
    p_near: float
    q_near: float
    p_far: float
    q_far: float

    @property
    def far_exponent(self) -> float:
        """Power of N multiplying ``1/|x|^2`` in the far piece."""
        return self.beta * (3.0 - self.alpha)

    @property
    def switch_radius(self) -> float:
        return 2.0 * self.n_cut**self.beta

    def __call__(self, x) -> float:
        r = float(np.linalg.norm(np.asarray(x, dtype=np.float64)))
        if r <= self.switch_radius:
            return self.c_near
        return self.c_far * self.n_cut**self.far_exponent / (r * r)


def field_bound(alpha: float, beta: float, n_cut: float, density_amplitude: float = 1.0,
                p_near: float = 4.0) -> FieldBound:
    """Constants of the bound ``|E^N(x,0)| <= C_far N^{beta(3-alpha)}/|x|^2`` (far) or ``C_near`` (near).

    ``density_amplitude`` is the constant ``A`` in ``|rho^N(y, 0)| <= A (1+|y|)^-alpha``.
    The far piece uses ``|x - y| >= |x|/2`` for ``|x| >= 2 N^beta``; the near
    piece splits the kernel at ``|x - y| = 1`` and applies Hoelder's
    inequality with ``(p_near, q_near)``, ``p_near > 3``, inside and with
    ``p_far`` in ``(3/alpha, 3)`` outside.
    """
    if not 1.0 < alpha < 3.0:
        raise ValueError(f"alpha must lie in (1, 3) for the infinite-mass bound, got {alpha}")
    if not p_near > 3.0:
        raise ValueError("p_near must exceed 3")
    q_near = p_near / (p_near - 1.0)
    p_far = 0.5 * (3.0 / alpha + 3.0)
    q_far = p_far / (p_far - 1.0)
    c_near = density_amplitude * (_holder_near(p_near, q_near) + _holder_far(alpha, p_far, q_far))
    mass = truncated_mass_integral(alpha, n_cut**beta)
    c_far = 4.0 * density_amplitude * mass / n_cut ** (beta * (3.0 - alpha))
    return FieldBound(alpha, beta, n_cut, c_near, c_far, p_near, q_near, p_far, q_far)


def initial_field_bound(alpha: float, beta: float, n_cut: float, x, density_amplitude: float = 1.0) -> float:
    return field_bound(alpha, beta, n_cut, density_amplitude)(x)


def density_amplitude(species) -> float:
    """``sum_i |sigma_i| c1_i (pi / lambda_i)^{3/2}``: bounds ``|rho|`` by ``A (1+|x|)^-alpha``."""
    return math.fsum(abs(s.sigma) * s.c1 * (math.pi / s.lambda_) ** 1.5 for s in species)


# ---------------------------------------------------------------------------
# Far-field decay.


def sphere_points(n: int) -> np.ndarray:
    """Deterministic, nearly uniform Fibonacci points on the unit sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phase = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phase), rho * np.sin(phase), z], axis=1)


@dataclass(frozen=True)
class FarFieldRow:
    radius: float
    max_e: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.max_e / self.bound if self.bound > 0 else (0.0 if self.max_e == 0 else math.inf)

    @property
    def scaled(self) -> float:
        """``max|E| * r^2``; tends to the net charge as r grows."""
        return self.max_e * self.radius**2


def far_field_tail_check(ens: Ensemble, cut: CutoffConfig, t: float, radii, softening: float,
                         v_max: float = 1.0, n_points: int = 256) -> list[FarFieldRow]:
    """Sample ``|E|`` on spheres and compare with ``4 sum_i |sigma_i| M_i / r^2``.

    Every radius must exceed ``2 (N^beta + v_max t)``, twice the support
    estimate, so that all charge lies within ``r/2`` of the origin.
    """
    support = cut.x_radius + v_max * t
    rows = []
    unit = sphere_points(n_points)
    mass = ens.unsigned_charge()
    for r in radii:
        r = float(r)
        if not r > 2.0 * support:
            raise ValueError(
                f"radius {r:g} must exceed twice the support estimate N^beta + v_max*t = {support:g}"
            )
        sample = eval_field(ens, r * unit, softening)
        rows.append(FarFieldRow(r, float(np.max(sample.magnitude)), 4.0 * mass / (r * r)))
    return rows


def write_far_field_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "max_E", "bound", "ratio"])
        for row in rows:
            w.writerow([repr(row.radius), repr(row.max_e), repr(row.bound), repr(row.ratio)])
