import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partialvp.config import (
    ConfigError,
    CutoffConfig,
    NumericsConfig,
    RunConfig,
    SpeciesParams,
    dump_config,
    load_config,
    parse_config,
    with_overrides,
)


def test_valid_file_loads(tmp_path, valid_ini):
    path = tmp_path / "run.ini"
    path.write_text(valid_ini)
    cfg = load_config(path)
    assert len(cfg.species) == 1
    sp = cfg.species[0]
    assert (sp.id, sp.sigma, sp.c1, sp.lambda_, sp.alpha) == (1, 1.0, 1.0, 1.0, 2.0)
    assert cfg.cutoff == CutoffConfig(4.0, 0.5)
    assert cfg.ladder == ()


def test_alpha_below_one_rejected(valid_ini):
    with pytest.raises(ConfigError, match="alpha must exceed 1"):
        parse_config(valid_ini.replace("alpha = 2", "alpha = 0.9"))


def test_defaults_filled(valid_ini):
    num = parse_config(valid_ini).numerics
    assert num.dt_max == 1e-2
    assert num.softening == 0.25  # dx / 2
    assert num.quad_radius_factor == 4.0
    assert num.weight_floor == 1e-12
    assert num.max_velocity_floor == 1.0


def test_species_sorted_by_id(valid_ini):
    text = valid_ini + "\n[species.0]\nsigma = -1\nc1 = 2\nlambda = 1\nalpha = 1.5\n"
    cfg = parse_config(text)
    assert [s.id for s in cfg.species] == [0, 1]


@pytest.mark.parametrize("bad, message", [
    ("n_cut = 4", "n_cut = 0.5"),
    ("beta = 0.5", "beta = 0"),
    ("c1 = 1", "c1 = -1"),
    ("lambda = 1", "lambda = 0"),
])
def test_invariant_violations(valid_ini, bad, message):
    with pytest.raises(ConfigError):
        parse_config(valid_ini.replace(bad, message))


def test_error_names_field(valid_ini):
    with pytest.raises(ConfigError, match="dx"):
        parse_config(valid_ini.replace("dx = 0.5", "dx = abc"))
    with pytest.raises(ConfigError, match="unknown field"):
        parse_config(valid_ini.replace("dv = 1.0", "dv = 1.0\ndz = 3"))
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(valid_ini + "\n[extra]\na = 1\n")
    with pytest.raises(ConfigError, match="species"):
        parse_config(valid_ini.split("[species.1]")[0])


def test_parse_error_reports_location():
    with pytest.raises(ConfigError, match="line"):
        parse_config("[cutoff]\nthis line has no separator\n", source="broken.ini")


def test_weight_floor_bound(valid_ini):
    with pytest.raises(ConfigError, match="weight_floor"):
        parse_config(valid_ini.replace("dv = 1.0", "dv = 1.0\nweight_floor = 1e-5"))


def test_local_energy_beta_limit():
    CutoffConfig(16, 0.3, check_local_energy=True)
    CutoffConfig(16, 0.5)  # unchecked: fine
    with pytest.raises(ConfigError, match="14/15"):
        CutoffConfig(16, 0.32, check_local_energy=True)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_pure_function_of_bytes(valid_ini):
    assert parse_config(valid_ini) == parse_config(valid_ini)


def test_overrides_win(valid_ini):
    cfg = with_overrides(parse_config(valid_ini), n_cut=32, beta=0.25, t_final=0.5)
    assert cfg.cutoff.n_cut == 32.0
    assert cfg.cutoff.beta == 0.25
    assert cfg.numerics.t_final == 0.5
    assert cfg.numerics.dx == 0.5


def test_ladder_section(valid_ini):
    cfg = parse_config(valid_ini + "\n[ladder]\nn_values = 8 16 32\n")
    assert cfg.ladder == (8.0, 16.0, 32.0)
    assert parse_config(dump_config(cfg)) == cfg


finite = st.floats(allow_nan=False, allow_infinity=False)
species_st = st.builds(
    SpeciesParams,
    id=st.integers(0, 50),
    sigma=st.floats(-10, 10, allow_nan=False),
    c1=st.floats(1e-6, 1e6),
    lambda_=st.floats(1e-3, 1e3),
    alpha=st.floats(1.0, 10.0, exclude_min=True),
    offset=st.tuples(*[st.floats(-5, 5)] * 3),
)
numerics_st = st.builds(
    NumericsConfig,
    dx=st.floats(1e-3, 10),
    dv=st.floats(1e-3, 10),
    softening=st.floats(1e-4, 1),
    dt_max=st.floats(1e-6, 1),
    t_final=st.floats(0, 100),
    weight_floor=st.floats(0, 9e-7),
    quad_cells=st.integers(1, 256),
    quad_refine=st.integers(1, 8),
    max_velocity_floor=st.floats(1, 10),
    adaptive_dt=st.booleans(),
    checkpoint_every=st.integers(0, 1000),
)


@settings(max_examples=60, deadline=None)
@given(
    species=st.lists(species_st, min_size=1, max_size=4, unique_by=lambda s: s.id),
    n_cut=st.floats(1, 1e4),
    beta=st.floats(0.01, 0.3),
    num=numerics_st,
    ladder=st.lists(st.floats(1, 1e4), max_size=5).map(tuple),
)
def test_round_trip(species, n_cut, beta, num, ladder):
    cfg = RunConfig(tuple(sorted(species, key=lambda s: s.id)), CutoffConfig(n_cut, beta), num, ladder)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)
    assert all(math.isfinite(getattr(again.numerics, f)) for f in ("dx", "dv", "softening"))
