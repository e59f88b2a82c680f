import dataclasses
import json
import math

import numpy as np
import pytest

from partialvp.config import parse_config, with_overrides
from partialvp.harness import (
    LadderError,
    LadderSpec,
    RunSummary,
    cauchy_check,
    envelope_fit,
    fit_exponent,
    ladder_checks,
    load_ladder,
    load_summary,
    report_dict,
    run_checks,
    run_ladder,
    simulate,
    trajectory_distance,
)
from partialvp.initial_data import build_ensemble

SMALL = """\
[cutoff]
n_cut = 4
beta = 0.3

[numerics]
dx = 1.0
dv = 1.5
weight_floor = 5e-7
quad_cells = 24
sphere_points = 64
t_final = 0.1
output_every = 0.05

[species.1]
sigma = 1
c1 = 1
lambda = 1
alpha = 2

[species.2]
sigma = -1
c1 = 0.5
lambda = 1
alpha = 2
"""


@pytest.fixture(scope="module")
def small_cfg():
    return parse_config(SMALL)


@pytest.fixture(scope="module")
def small_run(small_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return simulate(small_cfg, out)


def test_simulate_writes_outputs(small_run, small_cfg):
    out = small_run.out_dir
    from pathlib import Path

    out = Path(out)
    for name in ("config.resolved", "initial_ensemble.csv", "energy.csv", "kinematics.csv", "qsup.csv",
                 "farfield.csv", "summary.json", "final_state.npz"):
        assert (out / name).exists(), name
    assert parse_config((out / "config.resolved").read_text()) == small_cfg
    kin = (out / "kinematics.csv").read_text().splitlines()
    assert kin[0] == "t,v_max,r_disp,max_field_integral,tau_ratio"
    assert len(kin) == 1 + 3  # t = 0, 0.05, 0.1
    assert (out / "farfield.csv").read_text().startswith("radius,max_E,bound,ratio")
    assert (out / "initial_ensemble.csv").read_text().startswith("# partialvp-ensemble v1")


def test_summary_contents(small_run):
    assert small_run.t_final == pytest.approx(0.1)
    assert small_run.alpha == 2.0
    assert len(small_run.energy_reports) == 3
    assert small_run.energy_drift < 1e-3
    assert small_run.far_field[0]["radius"] == pytest.approx(8 * 4**0.3)
    assert small_run.kinematics["v_max"] >= 1.0
    assert set(small_run.envelope) == {1, 2}
    first, last = small_run.energy_reports[0], small_run.energy_reports[-1]
    assert math.isfinite(first.identity_residual) and math.isfinite(last.identity_residual)
    state, extra = small_run.final_state()
    assert state.t == pytest.approx(0.1) and "field_integral" in extra


def test_summary_json_round_trip(small_run):
    back = RunSummary.from_json(small_run.to_json())
    assert back.to_json() == small_run.to_json()
    loaded = load_summary(small_run.out_dir)
    assert loaded.to_json() == small_run.to_json()
    assert loaded.masses == small_run.masses
    assert math.isnan(loaded.energy_reports[1].field_energy_quadrature)


def test_rerun_is_bitwise_reproducible(small_cfg, small_run, tmp_path):
    again = simulate(small_cfg, tmp_path)
    from pathlib import Path

    for name in ("energy.csv", "kinematics.csv", "qsup.csv", "farfield.csv", "initial_ensemble.csv"):
        assert (tmp_path / name).read_bytes() == (Path(small_run.out_dir) / name).read_bytes(), name
    assert again.to_json().replace(str(tmp_path), "") == small_run.to_json().replace(small_run.out_dir, "")


def test_envelope_fit_recovers_initial_profile(small_cfg):
    ens = build_ensemble(small_cfg.species, small_cfg.cutoff, small_cfg.numerics)
    for sp in small_cfg.species:
        c2, lam = envelope_fit(ens, sp.id)
        assert lam == pytest.approx(sp.lambda_, rel=1e-7)
        assert c2 == pytest.approx(sp.c1, rel=1e-7)


def test_envelope_covers_every_particle(small_run):
    state, _ = small_run.final_state()
    ens = state.ensemble
    for sid, fit in small_run.envelope.items():
        sel = ens.sid == sid
        f = ens.weight[sel] / ens.cell_volume
        s = np.einsum("ij,ij->i", ens.v[sel], ens.v[sel])
        r = np.linalg.norm(ens.x[sel], axis=1)
        env = fit["c2"] * np.exp(-fit["lambda_prime"] * s) * (1 + r) ** -2.0
        assert np.all(f <= env * (1 + 1e-12))
        assert fit["lambda_prime"] > 0


def test_ladder_spec_guards(small_cfg, tmp_path):
    with pytest.raises(ValueError, match=">= 3 entries"):
        LadderSpec((8.0,), small_cfg, tmp_path)
    with pytest.raises(ValueError, match="strictly increasing"):
        LadderSpec((8.0, 8.0, 16.0), small_cfg, tmp_path)


def test_ladder_initial_data_only(small_cfg, tmp_path):
    cfg = with_overrides(small_cfg, t_final=0.0)
    runs = run_ladder(LadderSpec((8, 16, 32), cfg, tmp_path))
    assert [r.n_cut for r in runs] == [8.0, 16.0, 32.0]
    for r in runs:
        assert len(r.energy) == 1 and r.t_final == 0.0
        assert (tmp_path / f"N={int(r.n_cut)}" / "summary.json").exists()
    assert [r.n_cut for r in load_ladder(tmp_path)] == [8.0, 16.0, 32.0]
    # same lattice: the common characteristics have not moved apart at t = 0
    rep = cauchy_check(runs)
    assert all(p.sup_x == 0.0 and p.sup_v == 0.0 and p.n_missing == 0 for p in rep.pairs)
    assert rep.passes
    assert parse_config((tmp_path / "config.resolved").read_text()).ladder == (8.0, 16.0, 32.0)


def test_ladder_failure_keeps_partial_results(small_cfg, tmp_path):
    num = dataclasses.replace(small_cfg.numerics, max_particles=6000, t_final=0.0)
    cfg = small_cfg._replace(numerics=num)
    with pytest.raises(LadderError) as info:
        run_ladder(LadderSpec((4, 8, 64), cfg, tmp_path))
    assert [r.n_cut for r in info.value.completed] == [4.0, 8.0]
    assert (tmp_path / "N=8" / "summary.json").exists()


def test_cauchy_identical_runs_zero(small_cfg, small_run, tmp_path):
    twin = simulate(small_cfg, tmp_path)
    rep = cauchy_check([small_run, twin])
    assert rep.pairs[0].sup_x == 0.0 and rep.pairs[0].mean_v == 0.0


def test_cauchy_free_streaming_zero(tmp_path):
    text = SMALL.replace("sigma = 1\n", "sigma = 0\n").replace("sigma = -1\n", "sigma = 0\n")
    cfg = parse_config(text)
    runs = [simulate(with_overrides(cfg, n_cut=n), tmp_path / str(n)) for n in (4, 6, 8)]
    rep = cauchy_check(runs)
    assert all(p.sup_x == 0.0 and p.sup_v == 0.0 for p in rep.pairs)
    assert rep.monotone and rep.halves_per_doubling


def test_cauchy_rejects_mismatched_lattices(small_cfg, small_run, tmp_path):
    other = small_cfg._replace(numerics=dataclasses.replace(small_cfg.numerics, dx=0.9))
    run = simulate(with_overrides(other, n_cut=5), tmp_path)
    with pytest.raises(ValueError, match="dx"):
        cauchy_check([small_run, run])


def test_trajectory_distance_matches_by_key(small_cfg):
    ens = build_ensemble(small_cfg.species, small_cfg.cutoff, small_cfg.numerics)
    perm = np.random.default_rng(0).permutation(len(ens))
    shuffled = ens.select(perm)
    moved = shuffled.with_state(shuffled.x + 0.25, shuffled.v)
    n, missing, sx, sv, mx, mv = trajectory_distance(ens, moved)
    assert n == len(ens) and missing == 0
    assert sx == pytest.approx(0.25 * math.sqrt(3)) and sv == 0.0


def test_fit_exponent():
    assert fit_exponent([(n, 3 * n**2) for n in (2, 4, 8)]) == pytest.approx((2.0, 1.0))
    slope, r2 = fit_exponent([(n, 7.0) for n in (2, 4, 8)])
    assert slope == pytest.approx(0.0, abs=1e-14) and r2 == 1.0
    with pytest.raises(ValueError, match="positive"):
        fit_exponent([(2, 1.0), (4, 0.0), (8, 1.0)])
    with pytest.raises(ValueError, match="at least 3"):
        fit_exponent([(2, 1.0), (4, 2.0)])


def test_checks_and_report(small_cfg, tmp_path):
    runs = run_ladder(LadderSpec((4, 6, 8), with_overrides(small_cfg, t_final=0.05), tmp_path))
    checks = ladder_checks(runs)
    names = [c.name for c in checks]
    for expected in ("far_field slope", "far_field bound", "v_max slope", "Q^N slope", "tau ratio",
                     "cauchy monotone", "cauchy rate", "envelope lambda' species 1"):
        assert expected in names
    assert "energy_scaling total" not in names  # needs four cutoffs
    assert all(c.line().startswith(("[PASS]", "[FAIL]")) for c in checks)
    rate = next(c for c in checks if c.name == "cauchy rate")
    assert "artifact-level" in rate.note
    data = report_dict(runs, checks)
    json.dumps(data)
    assert data["all_passed"] == all(c.passed for c in checks)
    assert len(data["runs"]) == 3
    assert len(run_checks(runs[0])) == 3
