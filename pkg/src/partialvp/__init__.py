"""Weighted-particle simulation of truncated multi-species Vlasov-Poisson dynamics."""

from ._backend import NAME as KERNEL_BACKEND
from .config import ConfigError, CutoffConfig, NumericsConfig, RunConfig, SpeciesParams, load_config, parse_config
from .energy import EnergyReport, energy_report, verify_energy_scaling, verify_identity
from .field import eval_field, far_field_tail_check, initial_field_bound
from .harness import LadderSpec, RunSummary, cauchy_check, fit_exponent, run_ladder, simulate
from .initial_data import Ensemble, Particle, build_ensemble, default_profile, grid_particles
from .integrator import SimState, choose_dt, initial_state, run, step
from .local_energy import KinematicsRecord, local_energy, mollifier_eval, q_sup, track_kinematics

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "ConfigError", "CutoffConfig", "NumericsConfig", "RunConfig", "SpeciesParams",
    "load_config", "parse_config", "EnergyReport", "energy_report", "verify_energy_scaling",
    "verify_identity", "eval_field", "far_field_tail_check", "initial_field_bound", "LadderSpec",
    "RunSummary", "cauchy_check", "fit_exponent", "run_ladder", "simulate", "Ensemble", "Particle",
    "build_ensemble", "default_profile", "grid_particles", "SimState", "choose_dt", "initial_state",
    "run", "step", "KinematicsRecord", "local_energy", "mollifier_eval", "q_sup", "track_kinematics",
]
