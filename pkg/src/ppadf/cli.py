"""Command-line interface: ``ppadf simulate | filter | compare-uniform | sweep``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(loss of positive definiteness, particle weight underflow), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .adf import filter_run, n_steps
from .config import load, serialize
from .errors import ConfigError, NumericalError, ValidationError
from .metrics import avg_posterior_sd, comparison_records, mse_window
from .pf import pf_run
from .sweep import (
    SweepSpec,
    compare_uniform,
    default_jobs,
    parse_grid,
    parse_window,
    run_sweep,
    simulate_observations,
    stream,
)

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load(args.config)
    out = _out_dir(args.out_dir)
    obs = simulate_observations(cfg, cfg.belief0(), cfg.sim.dt, cfg.sim.T, stream(args.seed, "simulate"))
    files = [
        io.write_trajectory(out / "trajectory.csv", obs.trajectory),
        io.write_spikes(out / "spikes.jsonl", obs.events),
    ]
    io.write_manifest(out, command="simulate", config=serialize(cfg), seed=args.seed, files=files,
                      warnings=obs.warnings, extra={"n_spikes": len(obs.events), "max_p": obs.max_p})
    for w in obs.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _summary(beliefs, truth, window, sd_prior) -> dict:
    out = {"mean_rel_sd": avg_posterior_sd(beliefs, window) / sd_prior}
    if truth is not None:
        out["mse"] = mse_window(truth, beliefs, window)
    return out


def cmd_filter(args) -> int:
    cfg = load(args.config)
    out = _out_dir(args.out_dir)
    events = io.read_spikes(args.spikes)
    dt, T = cfg.sim.dt, cfg.sim.T
    T = n_steps(T, dt) * dt
    window = parse_window(args.window) if args.window else (0.0, T)
    truth = None
    if args.truth:
        truth = io.read_trajectory(args.truth)
        if not math.isclose(truth.dt, dt, rel_tol=1e-9) or truth.steps != n_steps(T, dt):
            raise ConfigError(f"{args.truth}: trajectory grid does not match dt={dt}, T={T}")
        truth = type(truth)(dt, truth.states)
    belief0 = cfg.belief0()
    sd_prior = math.sqrt(float(np.trace(belief0.cov)))
    files, summary = [], {}
    adf = pf = None
    if args.method in ("adf", "both"):
        adf = filter_run(events, cfg.dynamics, cfg.sensor, cfg.population, belief0, dt, T,
                         jitter=cfg.filter.jitter or args.jitter)
        files.append(io.write_beliefs(out / "beliefs_adf.csv", adf))
        summary["adf"] = _summary(adf, truth, window, sd_prior)
    if args.method in ("pf", "both"):
        P = args.particles or cfg.filter.particles
        pf = pf_run(events, cfg.dynamics, cfg.sensor, cfg.population, belief0, dt, T, P,
                    stream(args.seed, "pf"), resample=cfg.filter.resample,
                    ess_threshold=cfg.filter.ess_threshold)
        files.append(io.write_beliefs(out / "beliefs_pf.csv", pf))
        summary["pf"] = _summary(pf, truth, window, sd_prior)
    warnings = []
    if adf is not None and pf is not None and cfg.dynamics.n != 1:
        warnings.append("comparison records need a scalar state; comparison.csv not written")
    elif adf is not None and pf is not None:
        recs = comparison_records(adf, pf)
        files.append(io.write_csv(out / "comparison.csv", ["t", "eps_mu", "eps_sigma", "ks"],
                                  ([r.t, r.eps_mu, r.eps_sigma, r.ks] for r in recs)))
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(summary_path)
    io.write_manifest(out, command="filter", config=serialize(cfg), seed=args.seed, files=files,
                      warnings=warnings, extra={"method": args.method, "window": list(window)})
    return 0


def _uniform_job(job):
    cfg, trials, window, seed, s = job
    return compare_uniform(cfg, trials, window, seed, sigma_pop2=s)


def cmd_compare_uniform(args) -> int:
    cfg = load(args.config)
    out = _out_dir(args.out_dir)
    window = parse_window(args.window)
    if args.sigma_pop_list:
        try:
            sigmas = [float(v) for v in args.sigma_pop_list.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("--sigma-pop-list must be comma-separated numbers") from None
    else:
        sigmas = [None]
    jobs = [(cfg, args.trials, window, args.seed, s) for s in sigmas]
    n_jobs = default_jobs() if args.jobs is None else max(1, args.jobs)
    if n_jobs == 1 or len(jobs) == 1:
        results = [_uniform_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            results = list(pool.map(_uniform_job, jobs))
    header = ["sigma_pop2", "mse_adf", "mse_uniform", "se_adf", "se_uniform", "pooled_se", "se_diff",
              "rel_diff", "n_trials", "n_divergent"]
    rows = ([r.sigma_pop2, r.mse_adf, r.mse_uniform, r.se_adf, r.se_uniform, r.pooled_se, r.se_diff,
             r.rel_diff, r.n_trials, r.n_divergent] for r in results)
    files = [io.write_csv(out / "compare_uniform.csv", header, rows)]
    io.write_manifest(out, command="compare-uniform", config=serialize(cfg), seed=args.seed, files=files,
                      extra={"trials": args.trials, "window": list(window)})
    return 0


def cmd_sweep(args) -> int:
    cfg = load(args.config)
    out = _out_dir(args.out_dir)
    spec = SweepSpec(serialize(cfg), parse_grid(args.grid), args.trials, parse_window(args.window),
                     args.seed, args.refine, args.criterion)
    result = run_sweep(spec, jobs=args.jobs)
    files = [io.write_csv(out / "sweep.csv", result.header(), result.rows())]
    flagged = sum(1 for _, r in result.cells if r.exceeds_prior)
    warnings = [f"{flagged} cell(s) have mean posterior sd above the prior sd"] if flagged else []
    io.write_manifest(out, command="sweep", config=serialize(cfg), seed=args.seed, files=files, warnings=warnings,
                      extra={"grid": [[n, list(v)] for n, v in spec.axes], "trials": spec.trials,
                             "window": list(spec.window), "refine": spec.refine, "criterion": spec.criterion,
                             "seeding": "SeedSequence(seed, spawn_key=(crc32('simulate'), cell, trial))"})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppadf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
        sp.add_argument("--out-dir", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="simulate a state path and its spike train")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("filter", help="filter a recorded spike train")
    common(sp)
    sp.add_argument("--spikes", required=True, help="spike train (JSONL)")
    sp.add_argument("--truth", help="true trajectory CSV, enables MSE in the summary")
    sp.add_argument("--method", choices=("adf", "pf", "both"), default="adf")
    sp.add_argument("--particles", type=int, help="override filter.particles")
    sp.add_argument("--window", help="summary window T0:T1 (default the whole run)")
    sp.add_argument("--jitter", action="store_true",
                    help="clamp covariance eigenvalues instead of failing on loss of definiteness")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("compare-uniform", help="full filter against the uniform-coding filter")
    common(sp)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--sigma-pop-list", help="comma-separated population variances (default: config value)")
    sp.add_argument("--window", default="5:10", help="MSE window T0:T1 (default 5:10)")
    sp.add_argument("--jobs", type=int, help="worker processes (default $PPADF_JOBS or 1)")
    sp.set_defaults(func=cmd_compare_uniform)

    sp = sub.add_parser("sweep", help="Monte-Carlo sweep over population parameters")
    common(sp)
    sp.add_argument("--grid", required=True, help='axes, e.g. "c=0,0.5,1;sigma_pop2=0.1,1,10"')
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--window", default="1:2", help="evaluation window T0:T1 (default 1:2)")
    sp.add_argument("--jobs", type=int, help="worker processes (default $PPADF_JOBS or 1)")
    sp.add_argument("--criterion", choices=("sd", "mse"), default="sd")
    sp.add_argument("--refine", type=int, default=1, help="simulate on a grid this many times finer")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
