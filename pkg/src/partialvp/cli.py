"""Command-line entry point: ``partialvp {simulate,ladder,verify,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, load_config, with_overrides


def _add_common(p, need_config=True):
    p.add_argument("--config", type=Path, required=need_config, help="INI run configuration")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--n-cut", type=float, help="override cutoff N")
    p.add_argument("--beta", type=float, help="override spatial cutoff exponent")
    p.add_argument("--t-final", type=float, help="override final time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partialvp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("simulate", help="one run at a single cutoff"))
    p = sub.add_parser("ladder", help="runs over increasing cutoffs")
    _add_common(p)
    p.add_argument("--n-values", type=float, nargs="+", help="cutoffs (default: [ladder] section)")
    p = sub.add_parser("verify", help="re-run every check on existing outputs")
    p.add_argument("--out-dir", type=Path, required=True)
    p = sub.add_parser("report", help="write a JSON summary of fitted exponents and checks")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--output", type=Path, help="JSON path (default <out-dir>/report.json)")
    return parser


def _resolved(args):
    cfg = load_config(args.config)
    return with_overrides(cfg, n_cut=args.n_cut, beta=args.beta, t_final=args.t_final)


def _print_checks(checks) -> bool:
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return ok


def _load_runs(out_dir: Path):
    if (out_dir / "ladder.json").exists():
        return harness.load_ladder(out_dir)
    if (out_dir / "summary.json").exists():
        return [harness.load_summary(out_dir)]
    raise FileNotFoundError(f"no ladder.json or summary.json under {out_dir}")


def _checks_for(runs):
    if len(runs) >= 3:
        return harness.ladder_checks(runs)
    return [c for r in runs for c in harness.run_checks(r)]


def cmd_simulate(args) -> int:
    cfg = _resolved(args)
    summary = harness.simulate(cfg, args.out_dir)
    return 0 if _print_checks(harness.run_checks(summary)) else 1


def cmd_ladder(args) -> int:
    cfg = _resolved(args)
    n_values = args.n_values or cfg.ladder
    if not n_values:
        raise ConfigError("no cutoffs given: pass --n-values or add a [ladder] section")
    spec = harness.LadderSpec(tuple(n_values), cfg, args.out_dir)
    runs = harness.run_ladder(spec)
    return 0 if _print_checks(harness.ladder_checks(runs)) else 1


def cmd_verify(args) -> int:
    return 0 if _print_checks(_checks_for(_load_runs(args.out_dir))) else 1


def cmd_report(args) -> int:
    runs = _load_runs(args.out_dir)
    checks = _checks_for(runs)
    out = args.output or args.out_dir / "report.json"
    data = harness.report_dict(runs, checks)
    out.write_text(json.dumps(data, indent=2, allow_nan=False))
    print(f"wrote {out}")
    return 0 if _print_checks(checks) else 1


COMMANDS = {"simulate": cmd_simulate, "ladder": cmd_ladder, "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError, harness.LadderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
