"""Command line entry point: ``pesplit {check,simulate,converge,hypotheses}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 failed check or certification.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import config_hash, load_config
from .errors import BlowUpError, ConfigurationError, PesplitError, StabilityError, StatisticsError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FAILED = 4


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "kind", None) and args.kind != "all":
        overrides["kind"] = args.kind
    if getattr(args, "paths", None):
        overrides["paths"] = args.paths
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfg.replace(**overrides) if overrides else cfg


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(_load(args), triples=args.triples)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("check: all invariants hold" if ok else "check: FAILED")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_simulate(args) -> int:
    from .experiment import _configs, path_seed
    from .noise import sample_path
    from .reference import run_reference
    from .splitting import SplitConfig, run_splitting, trajectory_norms

    study = _load(args)
    if args.n < 1:
        raise ConfigurationError("--n must be positive")
    study = study.replace(n_list=(args.n,))
    ref_cfg, schemes = _configs(study)
    cfg: SplitConfig = schemes[args.n]
    seed = path_seed(study.seed, args.path)
    path = sample_path(cfg.noise, seed, study.n_fine, study.T)
    hist = run_splitting(cfg, path)
    ref = run_reference(ref_cfg, path)
    g = cfg.grid
    vn = trajectory_norms(hist.v_plus, g)
    en = trajectory_norms(hist.eta_minus, g)
    rm = trajectory_norms(ref.at_nodes(args.n), g)
    dv = trajectory_norms(hist.v_plus - ref.at_nodes(args.n), g)["h"]
    de = trajectory_norms(hist.eta_minus - ref.at_nodes(args.n), g)["h"]
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "v_h", "v_v", "v_dz_h", "eta_h", "eta_v", "eta_dz_h",
                    "ref_h", "ref_v", "err_v_h", "err_eta_h"])
        for k, t in enumerate(hist.mesh_times()):
            w.writerow([repr(float(t))] + [repr(float(a[k])) for a in (
                vn["h"], vn["v"], vn["dz_h"], en["h"], en["v"], en["dz_h"], rm["h"], rm["v"], dv, de)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_converge(args) -> int:
    from .experiment import convergence_study

    study = _load(args)

    def progress(done, total):
        if args.verbose:
            print(f"  path {done}/{total}", file=sys.stderr)

    result = convergence_study(study, workers=args.workers, refine_paths=args.refine_paths, progress=progress)
    text = result.to_csv()
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    summary = result.to_json()
    if args.json:
        Path(args.json).write_text(summary + "\n")
    print(f"config {config_hash(study)[:12]}  kind={study.kind}  slope={result.slope:.4f} "
          f"(stderr {result.slope_se:.4f})  status={result.status}", file=sys.stderr)
    return EXIT_OK


def cmd_hypotheses(args) -> int:
    from .experiment import certify_hypotheses
    from .noise import KINDS

    study = _load(args)
    kinds = KINDS if args.kind in (None, "all") else (args.kind,)
    grid = study.grid()
    reports = []
    for kind in kinds:
        model = study.replace(kind=kind).noise(grid)
        reports.append(certify_hypotheses(model, samples=args.samples, seed=args.estimate_seed))
    if args.json:
        print(json.dumps(reports, indent=2, sort_keys=True, default=bool))
    else:
        for rep in reports:
            print(f"{rep['kind']}: {'PASS' if rep['pass'] else 'FAIL'} ({rep['samples']} samples)")
            for name, row in rep["constants"].items():
                flag = "ok" if row["ok"] else "EXCEEDS"
                print(f"  {name}  estimated={row['estimated']:.6e}  declared={row['declared']:.6e}  {flag}")
            for cond, ok in rep["conditions"].items():
                print(f"  {cond}: {'yes' if ok else 'NO'}")
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pesplit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", default="default", help="config file, or 'default'")

    sp = sub.add_parser("check", help="run the invariant suite")
    add_config(sp)
    sp.add_argument("--triples", type=int, default=100)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("simulate", help="one path at one n; CSV of norms at mesh points")
    add_config(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--path", type=int, default=0, help="path index within the study seed")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--kind")
    sp.add_argument("--out", help="CSV file (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("converge", help="Monte Carlo convergence study")
    add_config(sp)
    sp.add_argument("--kind")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--refine-paths", type=int, default=0,
                    help="paths on which the reference is re-solved to bound its own error")
    sp.add_argument("--csv", help="study CSV (default stdout)")
    sp.add_argument("--json", help="JSON summary file")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("hypotheses", help="estimate and certify noise constants")
    add_config(sp)
    sp.add_argument("--kind", default="all")
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--estimate-seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_hypotheses)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"pesplit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, StabilityError, StatisticsError, FloatingPointError) as exc:
        print(f"pesplit: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PesplitError as exc:
        print(f"pesplit: {exc}", file=sys.stderr)
        return EXIT_CONFIG


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
