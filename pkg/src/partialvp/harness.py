"""Single runs, N-ladders, scaling fits and Cauchy-in-N trajectory comparison."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .config import RunConfig, dump_config, parse_config, with_overrides
from .energy import EnergyReport, energy_report, kinetic_energy, verify_identity, write_energy_csv
from .field import far_field_tail_check, write_far_field_csv
from .initial_data import Ensemble, build_ensemble, save_snapshot
from .integrator import initial_state, load_checkpoint, run, save_checkpoint
from .local_energy import q_sup, start_kinematics, track_kinematics, write_kinematics_csv, write_qsup_csv
from .scaling import fit_exponent

log = logging.getLogger(__name__)

# far-field sampling radii, in units of N^beta
FAR_FIELD_FACTORS = (8.0,)


class LadderError(RuntimeError):
    def __init__(self, message, completed):
        super().__init__(message)
        self.completed = completed


def format_n(n: float) -> str:
    return str(int(n)) if float(n).is_integer() else repr(float(n))


def common_alpha(species) -> float | None:
    alphas = {s.alpha for s in species}
    return alphas.pop() if len(alphas) == 1 else None


# ---------------------------------------------------------------------------
# Envelope fit.


def envelope_fit(ens: Ensemble, species_id: int):
    """Smallest log-linear upper envelope ``f <= C2 exp(-lam |v|^2) (1+|x|)^-alpha``.

    Minimises ``log C2 - lam * s_mid`` (the envelope in log form at the middle
    of the observed ``|v|^2`` range) subject to covering every particle, with
    ``lam >= 0``. Returns ``(C2, lam)``.
    """
    sp = next(s for s in ens.species if s.id == species_id)
    sel = (ens.sid == species_id) & (ens.weight > 0)
    if not np.any(sel):
        raise ValueError(f"species {species_id} has no particles")
    f = ens.weight[sel] / ens.cell_volume
    s = np.einsum("ij,ij->i", ens.v[sel], ens.v[sel])
    y = np.log(f) + sp.alpha * np.log1p(np.sqrt(np.einsum("ij,ij->i", ens.x[sel], ens.x[sel])))
    s_mid = 0.5 * (s.min() + s.max())
    # variables (log C2, lam); constraint -logC2 + lam s_p <= -y_p
    a_ub = np.stack([-np.ones_like(s), s], axis=1)
    res = linprog([1.0, -s_mid], A_ub=a_ub, b_ub=-y, bounds=[(None, None), (0.0, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    log_c2, lam = res.x
    # the LP solution may sit a rounding error inside a constraint
    log_c2 = max(log_c2, float(np.max(y + lam * s)))
    return float(math.exp(log_c2)), float(lam)


# ---------------------------------------------------------------------------
# Single run.


@dataclass
class RunSummary:
    n_cut: float
    beta: float
    alpha: float | None
    t_final: float
    n_particles: int
    masses: dict
    total_charge: float
    unsigned_charge: float
    energy: list
    identity_initial: dict
    identity_final: dict
    far_field: list
    kinematics: dict
    qsup: dict
    envelope: dict
    config_text: str
    out_dir: str = ""

    @property
    def config(self) -> RunConfig:
        return parse_config(self.config_text)

    @property
    def energy_reports(self) -> list[EnergyReport]:
        return [EnergyReport(**{k: math.nan if v is None else v for k, v in r.items()}) for r in self.energy]

    @property
    def energy_drift(self) -> float:
        reps = self.energy_reports
        e0 = reps[0].total
        return max(abs(r.total - e0) for r in reps) / abs(e0) if e0 else 0.0

    def final_state(self):
        state, extra = load_checkpoint(Path(self.out_dir) / "final_state.npz")
        return state, extra

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), indent=2, default=_json_default, allow_nan=False)

    @classmethod
    def from_json(cls, text: str, out_dir=None) -> "RunSummary":
        data = json.loads(text)
        data["masses"] = {int(k): v for k, v in data["masses"].items()}
        data["envelope"] = {int(k): v for k, v in data["envelope"].items()}
        if out_dir is not None:
            data["out_dir"] = str(out_dir)
        return cls(**data)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj)}")


def _clean(obj):
    # strict JSON: non-finite floats become null
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def simulate(cfg: RunConfig, out_dir) -> RunSummary:
    """Grid, integrate to ``t_final`` and write every diagnostic under ``out_dir``."""
    species, cut, num = cfg.species, cfg.cutoff, cfg.numerics
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = dump_config(cfg)
    (out / "config.resolved").write_text(text)

    ens = build_ensemble(species, cut, num)
    save_snapshot(ens, out / "initial_ensemble.csv")
    log.info("N=%s: %d particles", format_n(cut.n_cut), len(ens))

    state0 = initial_state(ens, num)
    c3 = num.max_velocity_floor
    kin = [start_kinematics(state0, c3)]
    ident0 = verify_identity(ens, num, cut, 0.0, kin[0].v_max)
    reports = [EnergyReport(0.0, kinetic_energy(ens), ident0.potential,
                            ident0.field_energy, ident0.residual, ident0.tail_correction)]
    far = far_field_tail_check(ens, cut, 0.0, [f * cut.x_radius for f in FAR_FIELD_FACTORS],
                               num.softening, kin[0].v_max, num.sphere_points)
    kin_rows = [kin[0].as_row()]

    def on_step(prev, new):
        kin[0] = track_kinematics(new, kin[0], c3)

    def on_output(state):
        kin_rows.append(kin[0].as_row())
        rep = energy_report(state.ensemble, state.t, num)
        log.debug("t=%.4f total=%.10g", state.t, rep.total)
        return rep

    def extra():
        return {"field_integral": kin[0].field_integral, "last_field": kin[0].last_field,
                "kinematics": np.array([kin[0].t, kin[0].v_max, kin[0].r_disp])}

    final, series = run(state0, num.t_final, num, on_step=on_step, on_output=on_output,
                        checkpoint_path=out / "checkpoint.npz", checkpoint_extra=extra)
    rec = kin[0]
    if series:
        ident_t = verify_identity(final.ensemble, num, cut, final.t, rec.v_max)
        last = series[-1]
        series[-1] = EnergyReport(last.t, last.kinetic, last.potential_double_sum,
                                  ident_t.field_energy, ident_t.residual, ident_t.tail_correction)
    else:
        ident_t = ident0
    reports += series
    q = q_sup(final.ensemble, rec.r_disp, num.softening, num.qsup_spacing_factor * rec.r_disp)
    envelope = {}
    for s in species:
        if np.any(final.ensemble.sid == s.id):
            c2, lam = envelope_fit(final.ensemble, s.id)
            envelope[s.id] = {"c2": c2, "lambda_prime": lam}

    save_checkpoint(final, out / "final_state.npz", extra())
    write_energy_csv(reports, out / "energy.csv")
    write_kinematics_csv(kin_rows, out / "kinematics.csv")
    write_qsup_csv([(final.t, q)], out / "qsup.csv")
    write_far_field_csv(far, out / "farfield.csv")

    summary = RunSummary(
        n_cut=cut.n_cut, beta=cut.beta, alpha=common_alpha(species), t_final=final.t,
        n_particles=len(ens), masses=ens.masses(), total_charge=ens.total_charge(),
        unsigned_charge=ens.unsigned_charge(),
        energy=[asdict(r) for r in reports],
        identity_initial=asdict(ident0) | {"surface_ok": ident0.surface_ok},
        identity_final=asdict(ident_t) | {"surface_ok": ident_t.surface_ok},
        far_field=[{"radius": r.radius, "max_e": r.max_e, "bound": r.bound, "ratio": r.ratio} for r in far],
        kinematics={k: _finite_or_none(v) for k, v in rec.as_row().items()},
        qsup={"value": q.value, "argmax": q.argmax.tolist(), "radius": rec.r_disp, "n_centres": q.n_centres},
        envelope=envelope, config_text=text, out_dir=str(out),
    )
    (out / "summary.json").write_text(summary.to_json())
    return summary


def load_summary(run_dir) -> RunSummary:
    run_dir = Path(run_dir)
    return RunSummary.from_json((run_dir / "summary.json").read_text(), out_dir=run_dir)


# ---------------------------------------------------------------------------
# Ladders.


@dataclass(frozen=True)
class LadderSpec:
    n_values: tuple[float, ...]
    base: RunConfig
    out_dir: Path

    def __post_init__(self):
        ns = tuple(float(n) for n in self.n_values)
        if len(ns) < 3:
            raise ValueError(f"a ladder needs >= 3 entries, got {len(ns)}")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("ladder cutoffs must be strictly increasing")
        object.__setattr__(self, "n_values", ns)
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    def run_dir(self, n: float) -> Path:
        return self.out_dir / f"N={format_n(n)}"


def run_ladder(spec: LadderSpec) -> list[RunSummary]:
    """Run every cutoff in turn; a failure raises :class:`LadderError` keeping finished runs on disk."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    (spec.out_dir / "config.resolved").write_text(dump_config(spec.base._replace(ladder=spec.n_values)))
    done = []
    for n in spec.n_values:
        cfg = with_overrides(spec.base, n_cut=n)
        try:
            done.append(simulate(cfg, spec.run_dir(n)))
        except Exception as exc:
            raise LadderError(f"run N={format_n(n)} failed: {exc}", done) from exc
    (spec.out_dir / "ladder.json").write_text(json.dumps(
        {"n_values": list(spec.n_values), "runs": [f"N={format_n(n)}" for n in spec.n_values]}, indent=2))
    return done


def load_ladder(out_dir) -> list[RunSummary]:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "ladder.json").read_text())
    return [load_summary(out_dir / name) for name in meta["runs"]]


# ---------------------------------------------------------------------------
# Cauchy-in-N check.


@dataclass(frozen=True)
class PairDistance:
    n_small: float
    n_large: float
    n_common: int
    n_missing: int
    sup_x: float
    sup_v: float
    mean_x: float
    mean_v: float


@dataclass(frozen=True)
class ConvergenceReport:
    pairs: list[PairDistance]

    @property
    def monotone(self) -> bool:
        """Sup position distance nonincreasing along the ladder, with 10% slack."""
        d = [p.sup_x for p in self.pairs]
        return all(b <= 1.1 * a for a, b in zip(d, d[1:]))

    @property
    def halves_per_doubling(self) -> bool:
        """Artifact-level expectation: sup distance shrinks at least in proportion to 1/N."""
        ok = True
        for a, b in zip(self.pairs, self.pairs[1:]):
            rate = a.n_large / b.n_large
            ok &= b.sup_x <= a.sup_x * rate if a.sup_x > 0 else b.sup_x == 0
        return ok

    @property
    def passes(self) -> bool:
        return self.monotone


_MATCH_FIELDS = ("dx", "dv", "softening", "dt_max", "t_final", "weight_floor", "adaptive_dt", "output_every")


def _check_compatible(cfgs):
    ref = cfgs[0]
    for cfg in cfgs[1:]:
        for name in _MATCH_FIELDS:
            if getattr(cfg.numerics, name) != getattr(ref.numerics, name):
                raise ValueError(f"runs differ in numerics.{name}; lattices are not comparable")
        if cfg.cutoff.beta != ref.cutoff.beta:
            raise ValueError("runs differ in beta")
        if cfg.species != ref.species:
            raise ValueError("runs differ in species parameters")


def _keys(ens: Ensemble) -> dict:
    table = np.column_stack([ens.sid.astype(np.float64), ens.x0, ens.v0])
    return {row.tobytes(): i for i, row in enumerate(table)}


def trajectory_distance(small: Ensemble, large: Ensemble):
    """Distances between characteristics sharing ``(species, x0, v0)`` exactly."""
    ks, kl = _keys(small), _keys(large)
    common = [(i, kl[k]) for k, i in ks.items() if k in kl]
    missing = len(ks) - len(common)
    if not common:
        return 0, missing, 0.0, 0.0, 0.0, 0.0
    i_s, i_l = np.array(common).T
    dx = np.linalg.norm(small.x[i_s] - large.x[i_l], axis=1)
    dv = np.linalg.norm(small.v[i_s] - large.v[i_l], axis=1)
    return len(common), missing, float(dx.max()), float(dv.max()), float(dx.mean()), float(dv.mean())


def cauchy_check(runs) -> ConvergenceReport:
    """Compare final states of adjacent runs at their (shared) final time."""
    runs = list(runs)
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    _check_compatible([r.config for r in runs])
    states = [r.final_state()[0] for r in runs]
    pairs = []
    for (ra, sa), (rb, sb) in zip(zip(runs, states), zip(runs[1:], states[1:])):
        if sa.t != sb.t:
            raise ValueError("runs end at different times")
        pairs.append(PairDistance(ra.n_cut, rb.n_cut, *trajectory_distance(sa.ensemble, sb.ensemble)))
    return ConvergenceReport(pairs)


# ---------------------------------------------------------------------------
# Checks over a ladder.


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: object
    criterion: str
    note: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"[{tag}] {self.name}: {self.value} | {self.criterion}{extra}"


def _r(x, nd=4):
    return None if x is None else round(float(x), nd)


def run_checks(summary: RunSummary) -> list[Check]:
    """Per-run checks: energy conservation and the field-energy identity."""
    tag = f"N={format_n(summary.n_cut)}"
    drift = summary.energy_drift
    checks = [Check(f"{tag} energy_conservation", drift < 1e-3, f"{drift:.3e}", "relative drift < 1e-3")]
    for label, ident in (("t=0", summary.identity_initial), ("t=T", summary.identity_final)):
        ok = ident["residual"] < 0.05 and ident["surface_ok"]
        checks.append(Check(f"{tag} identity {label}", ok, f"{ident['residual']:.3e}",
                            "residual < 5% and non-monopole boundary flux < 5%"))
    return checks


def ladder_checks(runs: list[RunSummary], cauchy: ConvergenceReport | None = None) -> list[Check]:
    """Every scaling and convergence check over a completed ladder."""
    from .energy import verify_energy_scaling

    runs = sorted(runs, key=lambda r: r.n_cut)
    checks = []
    for r in runs:
        checks += run_checks(r)
    beta = runs[0].beta
    alpha = runs[0].alpha
    pred = beta * (3.0 - alpha) if alpha is not None else None

    if len(runs) >= 4:
        from .config import CutoffConfig

        sc = verify_energy_scaling([(CutoffConfig(r.n_cut, r.beta), r.energy_reports[0]) for r in runs], alpha)
        checks.append(Check("energy_scaling total", sc.passes, _r(sc.slope), f"slope <= 3beta + 0.2 = {3 * beta + 0.2:.3g}"))
        if pred is not None:
            checks.append(Check("energy_scaling kinetic", abs(sc.kinetic_slope - pred) <= 0.2, _r(sc.kinetic_slope),
                                f"|slope - beta(3-alpha)| <= 0.2, beta(3-alpha) = {pred:.3g}"))

    far = [(r.n_cut, r.far_field[0]["max_e"] * r.far_field[0]["radius"] ** 2) for r in runs]
    ratios = [row["ratio"] for r in runs for row in r.far_field]
    if all(v > 0 for _, v in far):
        fslope, _ = fit_exponent(far)
        if pred is not None:
            checks.append(Check("far_field slope", abs(fslope - pred) <= 0.15, _r(fslope),
                                f"|slope - beta(3-alpha)| <= 0.15, beta(3-alpha) = {pred:.3g}"))
    else:
        checks.append(Check("far_field slope", False, "max|E| = 0", "field must be nonzero to fit"))
    checks.append(Check("far_field bound", max(ratios) <= 1.0, _r(max(ratios)), "max|E| r^2 <= 4 sum_i |sigma_i| M_i"))

    vslope, _ = fit_exponent((r.n_cut, r.kinematics["v_max"]) for r in runs)
    checks.append(Check("v_max slope", vslope <= 1.1, _r(vslope), "slope <= 1.1"))

    qvals = [(r.n_cut, r.qsup["value"]) for r in runs]
    if all(v > 0 for _, v in qvals):
        qslope, _ = fit_exponent(qvals)
        checks.append(Check("Q^N slope", qslope <= 1 - 1 / 15 + 0.1, _r(qslope), "slope <= 1 - 1/15 + 0.1"))
    else:
        checks.append(Check("Q^N slope", False, "nonpositive Q", "Q^N must be positive to fit"))

    taus = [r.kinematics["tau_ratio"] for r in runs]
    ok = all(t is not None and t < 2 / 3 + 0.1 for t in taus)
    checks.append(Check("tau ratio", ok, [_r(t) for t in taus], "every run < 2/3 + 0.1"))

    if cauchy is None and len(runs) >= 2:
        cauchy = cauchy_check(runs)
    if cauchy is not None:
        d = [p.sup_x for p in cauchy.pairs]
        checks.append(Check("cauchy monotone", cauchy.monotone, [float(f"{x:.3e}") for x in d],
                            "sup distance nonincreasing (10% slack)"))
        checks.append(Check("cauchy rate", cauchy.halves_per_doubling, [float(f"{x:.3e}") for x in d],
                            ">= 2x decrease per doubling of N", "artifact-level expectation, no rate is proven"))

    lam = {}
    for r in runs:
        for sid, fit in r.envelope.items():
            lam.setdefault(sid, []).append(fit["lambda_prime"])
    for sid, vals in sorted(lam.items()):
        med = float(np.median(vals))
        ok = min(vals) > 0 and all(abs(v - med) <= 0.2 * med for v in vals)
        checks.append(Check(f"envelope lambda' species {sid}", ok, [_r(v) for v in vals],
                            "lambda' > 0 and within 20% of its ladder median"))
    return checks


def report_dict(runs: list[RunSummary], checks: list[Check]) -> dict:
    return _clean({
        "runs": [{"n_cut": r.n_cut, "n_particles": r.n_particles, "energy_drift": r.energy_drift,
                  "v_max": r.kinematics["v_max"], "r_disp": r.kinematics["r_disp"],
                  "tau_ratio": r.kinematics["tau_ratio"], "qsup": r.qsup["value"],
                  "total_energy_t0": r.energy_reports[0].total, "kinetic_t0": r.energy_reports[0].kinetic,
                  "far_field_scaled": r.far_field[0]["max_e"] * r.far_field[0]["radius"] ** 2,
                  "envelope": r.envelope} for r in runs],
        "checks": [asdict(c) for c in checks],
        "all_passed": all(c.passed for c in checks),
    })
