"""Command-line front end.

Subcommands: verify-identities, build-corrections, reduced, collide, sweep,
report.  Every RunConfig key can be overridden with --set key=value (or the
section.key form used in config files).  Exit codes: 0 success, 1 numerical
acceptance failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .experiments import (RunConfig, ConfigError, corrections_for,
                          run_collision, run_reduced, run_sweep,
                          run_elastic_null, verify_identities, run_dir_for)
from .grids import GridSpec
from .linop import build_corrections
from .ansatz import SolitonParams, build_V0


def _add_config_args(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_ini(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not KEY=VALUE")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    return cfg.with_overrides(overrides)


def cmd_verify_identities(args) -> int:
    result = verify_identities(tol=args.tol, corrupt=args.corrupt)
    for name, row in result["identities"].items():
        print(f"{name:45s} abs_error = {row['abs_error']:.3e}")
    for name, val in result["operator_checks"].items():
        print(f"{name:45s} {val:.3e}")
    print("constants:", json.dumps(result["constants"], indent=2))
    if args.out:
        from .soliton import identity_suite, identity_suite_to_csv
        identity_suite_to_csv(identity_suite(), args.out)
        with open(os.path.splitext(args.out)[0] + ".json", "w") as f:
            json.dump(result, f, indent=2, sort_keys=True)
    print("PASS" if result["passed"] else "FAIL")
    return 0 if result["passed"] else 1


def cmd_build_corrections(args) -> int:
    cfg = _load_config(args)
    corr = corrections_for(cfg)
    print(json.dumps(corr.constants, indent=2, sort_keys=True))
    bad = {k: v for k, v in corr.verification.items()
           if k.endswith(("orth_Qprime", "orth_Q", "orth_Q_shifted"))
           and abs(v) > 1e-8}
    if args.dump_constants:
        with open(args.dump_constants, "w") as f:
            json.dump({"constants": corr.constants,
                       "verification": corr.verification,
                       "grid_key": corr.grid_key,
                       "code_version": __version__}, f, indent=2, sort_keys=True)
    if args.dump_profile:
        corr.profiles[args.dump_profile].as_profile().to_csv(
            f"{args.dump_profile}.csv")
        print(f"wrote {args.dump_profile}.csv")
    if bad:
        print("orthogonality failures:", bad)
        return 1
    return 0


def cmd_reduced(args) -> int:
    cfg = _load_config(args)
    _traj, summary = run_reduced(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return 0 if summary["complete"] else 1


def cmd_collide(args) -> int:
    cfg = _load_config(args)
    report, _decs, _snaps = run_collision(cfg, keep_fields=args.keep_fields)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True, default=float))
    print(f"artifacts in {run_dir_for(cfg)}")
    ok = report.complete and report.min_separation > report.Y0 - 1.0
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    mu0_values = [float(v) for v in args.mu0.split(",")]
    result = run_sweep(cfg, mu0_values, workers=args.workers)
    print(json.dumps({k: v for k, v in result.to_json().items()
                      if k != "reports"}, indent=2, default=float))
    ok = all(r["complete"] for r in result.reports)
    return 0 if ok else 1


def cmd_report(args) -> int:
    if args.component:
        cfg = _load_config(args)
        corr = corrections_for(cfg)
        mu1, mu2, y1, y2 = (float(v) for v in args.params.split(","))
        state = build_V0(SolitonParams(mu1, mu2, y1, y2), corr,
                         np.linspace(y2 - 25, y1 + 25, 4001))
        comp = state.components[args.component]
        out = args.out or f"{args.component}.csv"
        np.savetxt(out, np.column_stack([state.x, comp]), delimiter=",",
                   header="x,value", comments="")
        print(f"wrote {out}")
        return 0
    run_dir = args.run_dir
    report_path = os.path.join(run_dir, "report.json")
    if not os.path.exists(report_path):
        print(f"no report.json under {run_dir}", file=sys.stderr)
        return 2
    with open(report_path) as f:
        report = json.load(f)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gkdv-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-identities", help="soliton identities + operator oracles")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--corrupt", type=float, default=0.0,
                   help="inject a relative corruption (negative control)")
    p.add_argument("--out", help="write CSV/JSON report")
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("build-corrections", help="build/cache correction profiles")
    _add_config_args(p)
    p.add_argument("--dump-constants", help="write constants JSON")
    p.add_argument("--dump-profile", choices=["A1", "A2", "B1", "B2", "D1", "D2"])
    p.set_defaults(func=cmd_build_corrections)

    p = sub.add_parser("reduced", help="integrate the reduced parameter system")
    _add_config_args(p)
    p.set_defaults(func=cmd_reduced)

    p = sub.add_parser("collide", help="full PDE collision run")
    _add_config_args(p)
    p.add_argument("--keep-fields", action="store_true")
    p.set_defaults(func=cmd_collide)

    p = sub.add_parser("sweep", help="collision runs across mu0")
    _add_config_args(p)
    p.add_argument("--mu0", default="0.15,0.2,0.25,0.3",
                   help="comma-separated mu0 list")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-emit reports / export ansatz components")
    _add_config_args(p)
    p.add_argument("--run-dir", help="existing run directory")
    p.add_argument("--component", choices=["R1", "R2", "wA", "wQ", "wB", "wD"])
    p.add_argument("--params", default="0.0,0.0,8.0,-8.0",
                   help="mu1,mu2,y1,y2 for component export")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
