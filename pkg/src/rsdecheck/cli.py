"""Command-line runner: ``rsdecheck CONFIG [--seed N] [--out DIR] [--list] [--dry-run]``.

Exit codes: 0 all checks pass, 1 some check fails or is invalid,
2 configuration error, 3 simulation blow-up.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import verify
from .config import RunConfig, build_model, load_config, static_checks
from .errors import ConfigurationError, ModelError, SimulationBlowup
from .simulate import RhoSpec

log = logging.getLogger("rsdecheck")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
CSV_HEADER = ["experiment", "t_or_r", "empirical", "bound", "std_error", "pass"]


def list_experiments():
    lines = []
    for name, (anchor, params) in verify.CATALOG.items():
        lines.append(f"{name:32s} {anchor:50s} {params}")
    return "\n".join(lines) + "\n"


def _vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


def run_experiment(cfg: RunConfig, exp, seed, workers):
    """Run one configured experiment and return its list of reports."""
    prm = exp.typed_params()
    sde, domain, measure = build_model(cfg.models[exp.model], exp.model)
    n = prm.n_paths or cfg.mc.n_paths
    dt = prm.dt if prm.dt is not None else cfg.grid.dt
    T = getattr(prm, "T", None) or cfg.grid.T
    common = dict(n_paths=n, seed=seed, workers=workers, refine=prm.refine, chunk=cfg.mc.chunk)
    c = exp.check
    if c == "check_contraction":
        reps = [verify.check_contraction(sde, domain, _vec(prm.x), _vec(prm.y), prm.times, dt=dt, **common)]
    elif c == "check_w2_decay":
        reps = [verify.check_w2_decay(sde, domain, _vec(prm.x), prm.times, dt=dt,
                                      n_invariant=prm.n_invariant, mode=prm.mode,
                                      n_chains=prm.n_chains, **common)]
    elif c == "check_t1_concentration":
        V = prm.V.model_dump() if prm.V is not None else None
        reps = [verify.check_t1_concentration(sde, domain, _vec(prm.x), prm.functional, prm.r_grid,
                                              T=T, dt=dt, C=prm.C, V=V, **common)]
    elif c in ("check_t2_witness_d2", "check_t2_witness_dinf"):
        fn = getattr(verify, c)
        reps = [fn(sde, domain, _vec(prm.x0), RhoSpec.constant(prm.rho), T=T, dt=dt, **common)]
    elif c == "check_log_harnack":
        reps = [verify.check_log_harnack(sde, domain, prm.f.model_dump(), _vec(prm.x), _vec(prm.y),
                                         T=T, dt=dt, theta=prm.theta, **common)]
    elif c == "check_harnack":
        p = prm.p
        if p is None and prm.p_factor is not None:
            sde.require("k", "ellipticity")
            p = prm.p_factor * verify.harnack_threshold(sde.k, sde.ellipticity)
        reps = [verify.check_harnack(sde, domain, prm.f.model_dump(), _vec(prm.x), _vec(prm.y),
                                     T=T, p=p, dt=dt, **common)]
    elif c == "check_penalization":
        pdt = None if prm.dt == "auto" else dt
        reps = [verify.check_penalization(sde, domain, _vec(prm.x0), prm.eps_ladder, T=T, dt=pdt,
                                          threshold=prm.threshold, **common)]
    elif c == "check_reflection_monotonicity":
        pairs = [(_vec(a), _vec(b)) for a, b in prm.pairs]
        reps = [verify.check_reflection_monotonicity(sde, domain, pairs, T=T, dt=dt, **common)]
    elif c == "check_sdel_suite":
        f = prm.f.model_dump() if prm.f is not None else None
        reps = verify.check_sdel_suite(sde, measure, prm.x, prm.y, T=T, p=prm.p, rho=prm.rho,
                                       decay_times=prm.decay_times, f_spec=f, dt=dt,
                                       harnack_dt=prm.harnack_dt, n_invariant=prm.n_invariant,
                                       n_chains=prm.n_chains, **common)
    elif c == "check_poincare":
        reps = [verify.check_poincare(sde, domain, prm.g.model_dump(), _vec(prm.x), T=T, dt=dt, **common)]
    else:  # guarded by the schema
        raise ConfigurationError(f"unknown check {c!r}")
    for r in reps:
        r.metadata["experiment"] = exp.name
        r.metadata["check"] = c
        r.metadata["params"] = prm.model_dump()
        r.metadata["z"] = verify.Z
    return reps


def _report_name(exp_name, rep, many):
    return f"{exp_name}.{rep.name}" if many else exp_name


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit_plot_data(named_reports, path):
    """Write one CSV row per report row; header only for an empty set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for name, rep in named_reports:
        for row in rep.rows:
            w.writerow([name, row.at, _fmt(row.empirical), _fmt(row.bound), _fmt(row.std_error),
                        "true" if row.passed else "false"])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _summary_text(cfg, named, seed):
    lines = [f"rsdecheck suite: {len(named)} checks, master_seed={seed}, z={verify.Z}"]
    for name, rep in named:
        lines.append(f"  [{rep.status.upper():7s}] {name}: empirical={rep.empirical:.6g} "
                     f"bound={rep.bound:.6g} se={rep.std_error:.3g}"
                     + (f"  (flagged: {rep.flagged_typo})" if rep.flagged_typo else ""))
    n_pass = sum(r.passed for _, r in named)
    lines.append(f"passed {n_pass}/{len(named)}")
    return "\n".join(lines) + "\n"


def write_outputs(cfg, named, seed, out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise ConfigurationError(f"output directory {out_dir} is not writable: {err}") from None
    if not os.access(out_dir, os.W_OK):
        raise ConfigurationError(f"output directory {out_dir} is not writable")
    fmts = cfg.output.formats
    try:
        if "json" in fmts:
            for name, rep in named:
                with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
                    fh.write(json.dumps(rep.to_dict(), sort_keys=True, indent=2) + "\n")
        if "jsonl" in fmts:
            with open(os.path.join(out_dir, "reports.jsonl"), "w") as fh:
                for name, rep in named:
                    fh.write(json.dumps({"report": name, **rep.to_dict()}, sort_keys=True) + "\n")
        if "csv" in fmts:
            emit_plot_data(named, os.path.join(out_dir, "plot_data.csv"))
        suite = {"config": cfg.model_dump(mode="json"), "master_seed": seed, "z": verify.Z,
                 "n_checks": len(named), "n_passed": sum(r.passed for _, r in named),
                 "reports": {name: rep.status for name, rep in named}}
        with open(os.path.join(out_dir, "suite.json"), "w") as fh:
            fh.write(json.dumps(suite, sort_keys=True, indent=2) + "\n")
        if "summary" in fmts:
            with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
                fh.write(_summary_text(cfg, named, seed))
    except OSError as err:
        raise ConfigurationError(f"cannot write to {out_dir}: {err}") from None


def run(config_path, seed=None, out_dir=None, workers=None, dry_run=False, stream=None):
    """Run every configured experiment; returns the process exit code."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
        static_checks(cfg)
        if dry_run:
            stream.write(f"config OK: {len(cfg.experiments)} experiments\n")
            return EXIT_OK
        seed = cfg.mc.master_seed if seed is None else int(seed)
        workers = cfg.mc.workers if workers is None else int(workers)
        out_dir = out_dir or cfg.output.directory
        named = []
        for exp in cfg.experiments:
            log.info("running %s (%s)", exp.name, exp.check)
            reps = run_experiment(cfg, exp, seed, workers)
            for rep in reps:
                named.append((_report_name(exp.name, rep, len(reps) > 1), rep))
        write_outputs(cfg, named, seed, out_dir)
    except (ConfigurationError, ModelError) as err:
        stream.write(f"configuration error: {err}\n")
        return EXIT_CONFIG
    except SimulationBlowup as err:
        stream.write(f"simulation blow-up: {err}\n")
        return EXIT_BLOWUP
    stream.write(_summary_text(cfg, named, seed))
    return EXIT_OK if all(r.passed for _, r in named) else EXIT_FAIL


def main(argv=None):
    ap = argparse.ArgumentParser(prog="rsdecheck", description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", help="YAML run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override mc.master_seed")
    ap.add_argument("--out", default=None, help="override output.directory")
    ap.add_argument("--workers", type=int, default=None, help="override mc.workers")
    ap.add_argument("--list", action="store_true", help="print the experiment catalog and exit")
    ap.add_argument("--dry-run", action="store_true", help="validate the config without simulating")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        sys.stdout.write(list_experiments())
        return EXIT_OK
    if args.config is None:
        ap.print_usage(sys.stderr)
        sys.stderr.write("rsdecheck: error: a config path is required\n")
        return EXIT_CONFIG
    return run(args.config, seed=args.seed, out_dir=args.out, workers=args.workers,
               dry_run=args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
