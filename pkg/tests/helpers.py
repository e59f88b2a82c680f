"""Small ensemble builders shared by the tests."""

import numpy as np

from partialvp.config import SpeciesParams
from partialvp.initial_data import Ensemble


def point_charges(pos, charges, vel=None, sigma=1.0, sid=0):
    """Ensemble of one species with given positions and charges (weights = charge / sigma)."""
    pos = np.asarray(pos, dtype=float).reshape(-1, 3)
    vel = np.zeros_like(pos) if vel is None else np.asarray(vel, dtype=float).reshape(-1, 3)
    sp = SpeciesParams(id=sid, sigma=sigma, c1=1.0, lambda_=1.0, alpha=2.0)
    w = np.asarray(charges, dtype=float) / sigma
    return Ensemble.from_arrays((sp,), np.full(len(pos), sid), pos, vel, w)


def two_species(pos1, w1, pos2, w2, vel1=None, vel2=None, sigma=(1.0, -1.0)):
    """Ensemble of two species (ids 1 and 2) from explicit positions and weights."""
    s1 = SpeciesParams(id=1, sigma=sigma[0], c1=1.0, lambda_=1.0, alpha=2.0)
    s2 = SpeciesParams(id=2, sigma=sigma[1], c1=1.0, lambda_=1.0, alpha=2.0)
    pos1 = np.asarray(pos1, float).reshape(-1, 3)
    pos2 = np.asarray(pos2, float).reshape(-1, 3)
    vel1 = np.zeros_like(pos1) if vel1 is None else np.asarray(vel1, float).reshape(-1, 3)
    vel2 = np.zeros_like(pos2) if vel2 is None else np.asarray(vel2, float).reshape(-1, 3)
    pos = np.concatenate([pos1, pos2])
    vel = np.concatenate([vel1, vel2])
    sid = np.concatenate([np.full(len(pos1), 1), np.full(len(pos2), 2)])
    w = np.concatenate([np.broadcast_to(w1, len(pos1)), np.broadcast_to(w2, len(pos2))]).astype(float)
    return Ensemble.from_arrays((s1, s2), sid, pos, vel, w)
