"""Run parameters: parsing, validation, defaults and round-trip serialisation.

Configuration files are INI-style::

    [cutoff]
    n_cut = 16
    beta = 0.3

    [numerics]
    dx = 1.0
    dv = 1.5

    [species.1]
    sigma = 1
    c1 = 1
    lambda = 1
    alpha = 2

    [ladder]
    n_values = 8 16 32 64

Every ``species.<id>`` section defines one species; species are sorted by id
after loading. Omitted numeric fields take the defaults documented on
:class:`NumericsConfig`. The ``[ladder]`` section is optional.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

# 3*beta must stay below this for the mollified local-energy bound to apply
LOCAL_ENERGY_BETA_LIMIT = 14.0 / 15.0


class ConfigError(ValueError):
    """Invalid or unparsable run configuration."""


@dataclass(frozen=True)
class SpeciesParams:
    """One species: charge per unit mass and initial-envelope constants.

    The canonical initial density is
    ``c1 * exp(-lambda_ * |v|^2) * (1 + |x - offset|)^-alpha``.
    A nonzero ``offset`` shifts the spatial profile; the shifted profile still
    satisfies the envelope hypothesis with a larger amplitude.
    """

    id: int
    sigma: float
    c1: float
    lambda_: float
    alpha: float
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _finite(self, "sigma", "c1", "lambda_", "alpha")
        if not self.c1 > 0:
            raise ConfigError(f"species {self.id}: c1 must be positive, got {self.c1}")
        if not self.lambda_ > 0:
            raise ConfigError(f"species {self.id}: lambda must be positive, got {self.lambda_}")
        if not self.alpha > 1:
            raise ConfigError(f"species {self.id}: alpha must exceed 1, got {self.alpha}")
        offset = tuple(float(c) for c in self.offset)
        if len(offset) != 3 or not all(math.isfinite(c) for c in offset):
            raise ConfigError(f"species {self.id}: offset must be three finite numbers")
        object.__setattr__(self, "offset", offset)


@dataclass(frozen=True)
class CutoffConfig:
    """Velocity cutoff ``n_cut`` and spatial cutoff radius ``n_cut**beta``."""

    n_cut: float
    beta: float
    check_local_energy: bool = False

    def __post_init__(self):
        _finite(self, "n_cut", "beta")
        if not self.n_cut >= 1:
            raise ConfigError(f"n_cut must be at least 1, got {self.n_cut}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.check_local_energy and not 3 * self.beta < LOCAL_ENERGY_BETA_LIMIT:
            raise ConfigError(
                f"3*beta = {3 * self.beta:g} must be below 14/15 when the local-energy check is enabled"
            )

    @property
    def x_radius(self) -> float:
        return self.n_cut**self.beta

    @property
    def v_radius(self) -> float:
        return float(self.n_cut)


@dataclass(frozen=True)
class NumericsConfig:
    """Discretisation and run-control parameters.

    ``softening`` defaults to ``dx / 2``. ``weight_floor`` is relative to the
    largest lattice value of each species' profile: nodes with
    ``f < weight_floor * max f`` are dropped. ``quad_refine > 1`` subdivides
    field-energy quadrature cells near particles (1 keeps the plain grid).
    """

    dx: float
    dv: float
    softening: float | None = None
    dt_max: float = 1e-2
    t_final: float = 1.0
    weight_floor: float = 1e-12
    quad_radius_factor: float = 4.0
    quad_cells: int = 64
    quad_refine: int = 1
    max_velocity_floor: float = 1.0
    output_every: float = 0.1
    max_particles: int = 200_000
    adaptive_dt: bool = True
    checkpoint_every: int = 0
    qsup_spacing_factor: float = 0.5
    sphere_points: int = 256

    def __post_init__(self):
        if self.softening is None:
            object.__setattr__(self, "softening", self.dx / 2)
        _finite(self, "dx", "dv", "softening", "dt_max", "t_final", "weight_floor",
                "quad_radius_factor", "max_velocity_floor", "output_every", "qsup_spacing_factor")
        for name in ("dx", "dv", "softening", "dt_max", "quad_radius_factor",
                     "output_every", "qsup_spacing_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        # zero is allowed: initial-data-only runs
        if not self.t_final >= 0:
            raise ConfigError(f"t_final must be nonnegative, got {self.t_final}")
        if not 0 <= self.weight_floor < 1e-6:
            raise ConfigError(f"weight_floor must lie in [0, 1e-6), got {self.weight_floor}")
        if not self.max_velocity_floor >= 1:
            raise ConfigError(f"max_velocity_floor must be at least 1, got {self.max_velocity_floor}")
        if self.qsup_spacing_factor > 0.5:
            raise ConfigError("qsup_spacing_factor must not exceed 1/2")
        for name in ("quad_cells", "quad_refine", "max_particles", "sphere_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be nonnegative")


class RunConfig(NamedTuple):
    species: tuple[SpeciesParams, ...]
    cutoff: CutoffConfig
    numerics: NumericsConfig
    ladder: tuple[float, ...] = ()


def _finite(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ConfigError(f"{name} must be a finite number, got {value!r}")


_NUMERIC_FIELDS = {f.name for f in dataclasses.fields(NumericsConfig)}
_BOOL_FIELDS = {"adaptive_dt"}
_INT_FIELDS = {"quad_cells", "quad_refine", "max_particles", "checkpoint_every", "sphere_points"}
_SPECIES_KEYS = {"sigma": "sigma", "c1": "c1", "lambda": "lambda_", "alpha": "alpha"}


def _as_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None


def _as_bool(section, key, raw):
    text = raw.strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


def _as_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text; see the module docstring for the format."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    known = {"cutoff", "numerics", "ladder"}
    for name in parser.sections():
        if name not in known and not name.startswith("species."):
            raise ConfigError(f"{source}: unknown section [{name}]")

    if not parser.has_section("cutoff"):
        raise ConfigError(f"{source}: missing [cutoff] section")
    cut_sec = parser["cutoff"]
    _reject_unknown("cutoff", cut_sec, {"n_cut", "beta", "check_local_energy"})
    for key in ("n_cut", "beta"):
        if key not in cut_sec:
            raise ConfigError(f"[cutoff] {key}: required field missing")
    cutoff = CutoffConfig(
        n_cut=_as_float("cutoff", "n_cut", cut_sec["n_cut"]),
        beta=_as_float("cutoff", "beta", cut_sec["beta"]),
        check_local_energy=_as_bool("cutoff", "check_local_energy", cut_sec.get("check_local_energy", "false")),
    )

    if not parser.has_section("numerics"):
        raise ConfigError(f"{source}: missing [numerics] section")
    num_sec = parser["numerics"]
    _reject_unknown("numerics", num_sec, _NUMERIC_FIELDS)
    kwargs = {}
    for key, raw in num_sec.items():
        if key in _BOOL_FIELDS:
            kwargs[key] = _as_bool("numerics", key, raw)
        elif key in _INT_FIELDS:
            kwargs[key] = _as_int("numerics", key, raw)
        else:
            kwargs[key] = _as_float("numerics", key, raw)
    for key in ("dx", "dv"):
        if key not in kwargs:
            raise ConfigError(f"[numerics] {key}: required field missing")
    numerics = NumericsConfig(**kwargs)

    species = []
    for name in parser.sections():
        if not name.startswith("species."):
            continue
        sid = _as_int(name, "id", name.split(".", 1)[1])
        sec = parser[name]
        _reject_unknown(name, sec, set(_SPECIES_KEYS) | {"offset"})
        values = {}
        for key, attr in _SPECIES_KEYS.items():
            if key not in sec:
                raise ConfigError(f"[{name}] {key}: required field missing")
            values[attr] = _as_float(name, key, sec[key])
        if "offset" in sec:
            parts = sec["offset"].split()
            if len(parts) != 3:
                raise ConfigError(f"[{name}] offset: expected three numbers")
            values["offset"] = tuple(_as_float(name, "offset", p) for p in parts)
        species.append(SpeciesParams(id=sid, **values))
    if not species:
        raise ConfigError(f"{source}: at least one [species.<id>] section is required")
    species.sort(key=lambda s: s.id)

    ladder = ()
    if parser.has_section("ladder"):
        _reject_unknown("ladder", parser["ladder"], {"n_values"})
        raw = parser["ladder"].get("n_values", "")
        ladder = tuple(_as_float("ladder", "n_values", p) for p in raw.split())

    return RunConfig(tuple(species), cutoff, numerics, ladder)


def _reject_unknown(section, sec, allowed):
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"[{section}] {key}: unknown field")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def dump_config(cfg: RunConfig) -> str:
    """Serialise ``cfg``; ``parse_config(dump_config(cfg)) == cfg`` exactly."""
    lines = ["[cutoff]",
             f"n_cut = {cfg.cutoff.n_cut!r}",
             f"beta = {cfg.cutoff.beta!r}",
             f"check_local_energy = {str(cfg.cutoff.check_local_energy).lower()}",
             "",
             "[numerics]"]
    for f in dataclasses.fields(NumericsConfig):
        value = getattr(cfg.numerics, f.name)
        text = str(value).lower() if isinstance(value, bool) else repr(value)
        lines.append(f"{f.name} = {text}")
    for sp in cfg.species:
        lines += ["", f"[species.{sp.id}]",
                  f"sigma = {sp.sigma!r}",
                  f"c1 = {sp.c1!r}",
                  f"lambda = {sp.lambda_!r}",
                  f"alpha = {sp.alpha!r}",
                  "offset = " + " ".join(repr(c) for c in sp.offset)]
    if cfg.ladder:
        lines += ["", "[ladder]", "n_values = " + " ".join(repr(n) for n in cfg.ladder)]
    return "\n".join(lines) + "\n"


def with_overrides(cfg: RunConfig, *, n_cut=None, beta=None, t_final=None) -> RunConfig:
    """Return ``cfg`` with command-line overrides applied (overrides win)."""
    cutoff = cfg.cutoff
    if n_cut is not None or beta is not None:
        cutoff = dataclasses.replace(
            cutoff,
            n_cut=float(n_cut) if n_cut is not None else cutoff.n_cut,
            beta=float(beta) if beta is not None else cutoff.beta,
        )
    numerics = cfg.numerics
    if t_final is not None:
        numerics = dataclasses.replace(numerics, t_final=float(t_final))
    return cfg._replace(cutoff=cutoff, numerics=numerics)
