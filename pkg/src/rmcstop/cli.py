"""Command-line front end: solve, eval, paths, bench.

Every run writes its outputs plus a JSON manifest (command, config digest,
seed, version, wall time, output paths) so results are traceable to exact
settings.  The --threads flag is accepted for interface compatibility and
recorded in the manifest; execution is vectorized single-process and results
are identical at any requested degree.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bench import PRESETS, make_test_set, run_benchmark, run_budget_sweep
from .config import (
    ConfigError,
    config_digest,
    load_config,
    parse_model,
    parse_solver,
    parse_swing,
)
from .model import PathSet
from .policy import cv_adjust, forward_eval
from .sampling import RandomStream
from .solvers import (
    PolicyFit,
    SolverConfig,
    solve_fixed,
    solve_ls,
    solve_piecewise_bw,
    solve_seq,
    solve_seq_batch,
    solve_tvr,
)
from .swing import SwingPolicyFit, solve_swing_fixed, swing_eval

OUT_DIR_ENV = "RMCSTOP_OUT"


def _out_dir(arg):
    path = arg or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(out_dir, command, outputs, seed=None, cfg_path=None,
                    wall=None, threads=None):
    manifest = {
        "command": command,
        "config_digest": config_digest(cfg_path) if cfg_path else None,
        "seed": seed,
        "version": __version__,
        "wall_seconds": wall,
        "threads": threads,
        "outputs": outputs,
    }
    path = os.path.join(out_dir, f"{command}_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return path


def _dispatch_solver(cfg: SolverConfig, model, stream):
    common = dict(stream=stream)
    if cfg.solver == "ls":
        return solve_ls(
            model, int(cfg.n), cfg.method, w=cfg.w,
            itm_filter=cfg.itm_filter, degree=cfg.degree,
            sorted_bases=cfg.sorted_bases, include_payoff=cfg.include_payoff,
            kernel=cfg.kernel, bandwidth=cfg.bandwidth,
            kernel_family=cfg.kernel_family, km_cov=cfg.km_cov,
            km_var=cfg.km_var, **common,
        )
    if cfg.solver == "tvr":
        return solve_tvr(
            model, int(cfg.n), cfg.method, itm_filter=cfg.itm_filter,
            degree=cfg.degree, sorted_bases=cfg.sorted_bases,
            include_payoff=cfg.include_payoff, kernel=cfg.kernel,
            bandwidth=cfg.bandwidth, kernel_family=cfg.kernel_family,
            km_cov=cfg.km_cov, km_var=cfg.km_var, **common,
        )
    if cfg.solver == "fixed":
        return solve_fixed(
            model, cfg.method, sites=cfg.sites, box=_as_box(cfg.box),
            pilot_quantile=cfg.pilot_quantile, qmc=cfg.qmc, n=cfg.n,
            nrep=cfg.nrep, pilot_nsims=cfg.pilot_nsims, w=cfg.w,
            constraints=cfg.constraints, itm_filter=cfg.itm_filter,
            degree=cfg.degree, sorted_bases=cfg.sorted_bases,
            include_payoff=cfg.include_payoff, kernel=cfg.kernel,
            bandwidth=cfg.bandwidth, kernel_family=cfg.kernel_family,
            km_cov=cfg.km_cov, km_var=cfg.km_var, **common,
        )
    if cfg.solver == "piecewise_bw":
        policy, _ = solve_piecewise_bw(model, int(cfg.n), cfg.n_bins, **common)
        return policy
    if cfg.solver == "seq":
        return solve_seq(
            model, cfg.method, init_size=cfg.init_size,
            final_size=cfg.final_size, nrep=cfg.nrep, cand_len=cfg.cand_len,
            update_freq=cfg.update_freq, ucb_gamma=cfg.ucb_gamma,
            acquisition=cfg.acquisition, box=_as_box(cfg.box),
            pilot_quantile=cfg.pilot_quantile or 0.02,
            pilot_nsims=cfg.pilot_nsims, kernel_family=cfg.kernel_family,
            km_cov=cfg.km_cov, km_var=cfg.km_var, **common,
        )
    if cfg.solver == "seq_batch":
        return solve_seq_batch(
            model, cfg.method, heuristic=cfg.heuristic,
            total_budget=int(cfg.total_budget), r0=cfg.r0,
            init_size=cfg.init_size, cand_len=cfg.cand_len,
            update_freq=cfg.update_freq, ucb_gamma=cfg.ucb_gamma,
            box=_as_box(cfg.box), pilot_quantile=cfg.pilot_quantile or 0.02,
            pilot_nsims=cfg.pilot_nsims, kernel_family=cfg.kernel_family,
            km_cov=cfg.km_cov, km_var=cfg.km_var, **common,
        )
    raise ConfigError(f"unknown solver {cfg.solver!r}")


def _as_box(box):
    return None if box is None else np.asarray(box, dtype=float)


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    out_dir = _out_dir(args.out)
    sections = load_config(args.config)
    model = parse_model(sections.get("model", {}))
    cfg = parse_solver(sections.get("solver", {}), seed=args.seed)
    stream = RandomStream(cfg.seed)
    if "swing" in sections:
        spec = parse_swing(sections["swing"], model)
        policy = solve_swing_fixed(
            spec, cfg.method, stream, n=cfg.n, nrep=cfg.nrep,
            pilot_quantile=cfg.pilot_quantile or 0.02,
            pilot_nsims=cfg.pilot_nsims, kernel=cfg.kernel,
            bandwidth=cfg.bandwidth, kernel_family=cfg.kernel_family,
            km_cov=cfg.km_cov, km_var=cfg.km_var,
        )
        fit_path = os.path.join(out_dir, "swing_policy.bin")
    else:
        policy = _dispatch_solver(cfg, model, stream)
        fit_path = os.path.join(out_dir, "policy.bin")
    policy.save(fit_path)
    diag_path = None
    if isinstance(policy, PolicyFit):
        diag_path = os.path.join(out_dir, "solve_diagnostics.csv")
        policy.diagnostics_csv(diag_path)
    outputs = [fit_path] + ([diag_path] if diag_path else [])
    _write_manifest(
        out_dir, "solve", outputs, seed=cfg.seed, cfg_path=args.config,
        wall=time.perf_counter() - t0, threads=args.threads,
    )
    print(f"wrote {fit_path}")
    return 0


def _load_policy(path):
    try:
        return PolicyFit.load(path), False
    except ValueError:
        return SwingPolicyFit.load(path), True


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    out_dir = _out_dir(args.out)
    policy, is_swing = _load_policy(args.fit)
    test = PathSet.load(args.testset)
    model = policy.spec.model if is_swing else policy.model
    if test.dim != model.dim:
        raise SystemExit("error: test set dimension does not match the fit")
    if args.rights is not None:
        if not is_swing:
            raise SystemExit(
                "error: --rights given but the fit has no swing layers"
            )
        result = swing_eval(test, policy, args.rights)
    else:
        if is_swing:
            policy = policy.layer_policy(1)
        result = forward_eval(test, policy, model, european=True)
    record = result.summary()
    if args.true_european is not None and result.european_estimate is not None:
        record["cv_adjusted_price"] = cv_adjust(result, args.true_european)
    record["wall_seconds"] = time.perf_counter() - t0
    out_path = os.path.join(out_dir, "eval_result.json")
    with open(out_path, "w") as fh:
        json.dump(record, fh, indent=2)
    _write_manifest(
        out_dir, "eval", [out_path], seed=None,
        wall=record["wall_seconds"], threads=args.threads,
    )
    print(json.dumps(record, indent=2))
    return 0


def cmd_paths(args) -> int:
    t0 = time.perf_counter()
    out_dir = _out_dir(args.out)
    out_path = os.path.join(out_dir, f"{args.instance}_test_{args.n}.npz")
    make_test_set(args.instance, args.n, args.seed, out_path)
    _write_manifest(
        out_dir, "paths", [out_path], seed=args.seed,
        wall=time.perf_counter() - t0, threads=args.threads,
    )
    print(f"wrote {out_path}")
    return 0


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    out_dir = _out_dir(args.out)
    outputs = []
    if args.sweep_budgets:
        # price-vs-budget study data, one plot-ready file per instance
        for mid in args.instances:
            out_path = os.path.join(
                out_dir, f"sweep_{mid}_{args.sweep_solver}.csv"
            )
            run_budget_sweep(
                mid, args.sweep_solver, args.sweep_budgets,
                macro_reps=args.reps, seed=args.seed, out_path=out_path,
                test_size=args.n,
            )
            outputs.append(out_path)
            print(f"wrote {out_path}")
        _write_manifest(
            out_dir, "bench", outputs, seed=args.seed,
            wall=time.perf_counter() - t0, threads=args.threads,
        )
        return 0
    out_path = os.path.join(out_dir, "bench_table.csv")
    rows = run_benchmark(
        args.instances, args.presets, macro_reps=args.reps,
        out_path=out_path, seed=args.seed, test_size=args.n,
    )
    _write_manifest(
        out_dir, "bench", [out_path], seed=args.seed,
        cfg_path=None, wall=time.perf_counter() - t0, threads=args.threads,
    )
    failures = [r for r in rows if r["status"] != "ok"]
    for row in rows:
        print(
            f"{row['model']:>3} {row['solver']:>10} price={row['price']} "
            f"se={row['se']} status={row['status']}"
        )
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmcstop",
        description="Regression Monte Carlo optimal stopping toolkit",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="parallelism degree (recorded; results identical "
                             "at any value)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="fit a policy from a config file")
    p_solve.add_argument("config")
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_eval = sub.add_parser("eval", help="evaluate a saved policy on a test set")
    p_eval.add_argument("fit")
    p_eval.add_argument("testset")
    p_eval.add_argument("--rights", type=int, default=None)
    p_eval.add_argument("--true-european", type=float, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_paths = sub.add_parser("paths", help="generate a persisted test set")
    p_paths.add_argument("instance")
    p_paths.add_argument("--n", type=int, default=40_000)
    p_paths.add_argument("--seed", type=int, default=101)
    p_paths.add_argument("--out", default=None)
    p_paths.set_defaults(func=cmd_paths)

    p_bench = sub.add_parser("bench", help="run the benchmark price table")
    p_bench.add_argument("--instances", nargs="+", default=["M1", "M2", "M3"])
    p_bench.add_argument("--presets", nargs="+", default=["lm", "bw"],
                         choices=list(PRESETS))
    p_bench.add_argument("--reps", type=int, default=1)
    p_bench.add_argument("--n", type=int, default=None,
                         help="test set size override")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--sweep-budgets", type=int, nargs="+", default=None,
                         help="emit price-vs-budget data at these budgets "
                              "instead of the preset table")
    p_bench.add_argument("--sweep-solver", default="ls",
                         choices=["ls", "tvr", "bw"])
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
