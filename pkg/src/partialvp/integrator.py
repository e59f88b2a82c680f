"""Kick-drift-kick leapfrog for the characteristics of the truncated system."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .config import NumericsConfig, SpeciesParams
from .field import coulomb
from .initial_data import Ensemble

# time comparisons against the output cadence
_TIME_EPS = 1e-12


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimState:
    """Ensemble at time ``t`` with the field ``e_field`` already evaluated at ``ensemble.x``."""

    ensemble: Ensemble
    t: float
    step_count: int
    dt: float
    e_field: np.ndarray

    @property
    def acceleration(self) -> np.ndarray:
        return self.ensemble.sigma[:, None] * self.e_field


def particle_field(ens: Ensemble, x: np.ndarray, softening: float) -> np.ndarray:
    e, _ = coulomb(x, ens.charge, x, softening)
    return e


def initial_state(ens: Ensemble, num: NumericsConfig) -> SimState:
    return SimState(ens, 0.0, 0, 0.0, particle_field(ens, ens.x, num.softening))


def choose_dt(state: SimState, num: NumericsConfig, next_output: float | None = None) -> float:
    """Step size from the velocity and acceleration limits, snapped to land on ``next_output``.

    ``dt = min(dt_max, 0.1 / max(1, V), 0.3 sqrt(eps / max|a|))`` where ``V`` is
    the current largest speed. With ``adaptive_dt`` off only ``dt_max`` is used.
    Snapping divides the remaining interval into equal steps no longer than the limit.
    """
    dt = num.dt_max
    ens = state.ensemble
    if num.adaptive_dt and len(ens):
        vmax = float(np.sqrt(np.max(np.einsum("ij,ij->i", ens.v, ens.v))))
        dt = min(dt, 0.1 / max(1.0, vmax))
        a = state.acceleration
        amax = float(np.sqrt(np.max(np.einsum("ij,ij->i", a, a))))
        if amax > 0:
            dt = min(dt, 0.3 * math.sqrt(num.softening / amax))
    if next_output is not None:
        remaining = next_output - state.t
        if remaining <= 0:
            raise ValueError("next_output must lie after the current time")
        dt = remaining / math.ceil(remaining / dt - _TIME_EPS)
    return dt


def _check_finite(x, v, step_no):
    bad = ~(np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(v), axis=1))
    if np.any(bad):
        pid = int(np.flatnonzero(bad)[0])
        raise IntegrationError(f"non-finite phase-space point for particle {pid} at step {step_no}")


def step(state: SimState, num: NumericsConfig, dt: float, t_new: float | None = None) -> SimState:
    """One KDK step: half kick with the cached field, drift, re-evaluate the field, half kick.

    ``t_new`` overrides ``t + dt`` so output times are hit exactly.
    """
    ens = state.ensemble
    sigma = ens.sigma[:, None]
    v_half = ens.v + (0.5 * dt) * (sigma * state.e_field)
    x_new = ens.x + dt * v_half
    # checked before the field spreads a bad value to every particle
    _check_finite(x_new, v_half, state.step_count + 1)
    e_new = particle_field(ens, x_new, num.softening)
    v_new = v_half + (0.5 * dt) * (sigma * e_new)
    _check_finite(x_new, v_new, state.step_count + 1)
    t = state.t + dt if t_new is None else t_new
    return SimState(ens.with_state(x_new, v_new), t, state.step_count + 1, dt, e_new)


StepHook = Callable[[SimState, SimState], None]
OutputHook = Callable[[SimState], object]


def output_times(t0: float, t_final: float, every: float) -> list[float]:
    """Cadence times in ``(t0, t_final]``; ``t_final`` is always included."""
    k0 = math.floor(t0 / every + _TIME_EPS) + 1
    times = []
    k = k0
    while k * every < t_final - _TIME_EPS:
        times.append(k * every)
        k += 1
    if t_final > t0 + _TIME_EPS:
        times.append(t_final)
    return times


def run(state0: SimState, t_final: float, num: NumericsConfig, on_step: StepHook | None = None,
        on_output: OutputHook | None = None, checkpoint_path=None, checkpoint_extra=None):
    """Advance to ``t_final``; returns ``(final_state, series)``.

    ``on_step(prev, new)`` runs after every accepted step, ``on_output(state)``
    at every cadence time and its return values form ``series``. With
    ``num.checkpoint_every > 0`` and a ``checkpoint_path``, the state is saved
    every that many steps; ``checkpoint_extra()`` may supply extra arrays.
    """
    if t_final > num.t_final + _TIME_EPS:
        raise ValueError(f"t_final={t_final} exceeds configured horizon {num.t_final}")
    state = state0
    series = []
    for target in output_times(state0.t, t_final, num.output_every):
        while state.t < target - _TIME_EPS:
            dt = choose_dt(state, num, next_output=target)
            last = state.t + dt >= target - _TIME_EPS
            new = step(state, num, dt, t_new=target if last else None)
            if on_step is not None:
                on_step(state, new)
            state = new
            if checkpoint_path is not None and num.checkpoint_every and state.step_count % num.checkpoint_every == 0:
                save_checkpoint(state, checkpoint_path, checkpoint_extra() if checkpoint_extra else None)
        if on_output is not None:
            series.append(on_output(state))
    return state, series


def save_checkpoint(state: SimState, path, extra: dict | None = None) -> None:
    """Serialise the full state (and optional extra arrays) to an ``.npz`` file."""
    ens = state.ensemble
    arrays = {f"extra_{k}": np.asarray(v) for k, v in (extra or {}).items()}
    meta = {"t": state.t, "step_count": state.step_count, "dt": state.dt,
            "cell_volume": ens.cell_volume, "species": [asdict(s) for s in ens.species]}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, meta=np.array(json.dumps(meta)), sid=ens.sid, x0=ens.x0, v0=ens.v0, x=ens.x,
             v=ens.v, weight=ens.weight, e_field=state.e_field, **arrays)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns ``(state, extra)`` exactly as saved."""
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        species = tuple(SpeciesParams(**{**s, "offset": tuple(s["offset"])}) for s in meta["species"])
        ens = Ensemble(species, data["sid"], data["x0"], data["v0"], data["x"], data["v"],
                       data["weight"], meta["cell_volume"])
        extra = {k[len("extra_"):]: data[k] for k in data.files if k.startswith("extra_")}
        state = SimState(ens, meta["t"], meta["step_count"], meta["dt"], data["e_field"])
    return state, extra
