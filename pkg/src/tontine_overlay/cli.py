"""Batch commands: solve, frontier, baseline, convergence, simulate, bootstrap, heatmaps."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_returns, load_and_deflate, \
    evaluate_policy_bootstrap
from .config import RunConfig, load_config
from .objective import FrontierPoint, optimize_wstar, sweep_kappa
from .policy import ControlPolicy
from .report import (render_frontier, render_heatmaps, render_percentiles,
                     write_frontier, write_heatmaps, write_percentiles,
                     write_table)
from .scenario import Scenario
from .simulate import export_heatmaps, simulate_constant, simulate_policy
from .solver import SolverGrid
from importlib import resources


def _grid(cfg: RunConfig) -> SolverGrid:
    return SolverGrid.square(cfg.solver.grid)


def _series(cfg: RunConfig):
    if cfg.run.market_data == "builtin":
        ref = resources.files("tontine_overlay.data") \
            .joinpath("synthetic_monthly_1926_2020.csv")
        with resources.as_file(ref) as path:
            return load_and_deflate(path)
    return load_and_deflate(cfg.run.market_data)


def _policy_path(cfg: RunConfig, args) -> Path:
    if getattr(args, "policy", None):
        return Path(args.policy)
    return Path(cfg.run.outdir) / "policy.npz"


def _solve_one(cfg: RunConfig, kappa: float):
    return optimize_wstar(
        cfg.scenario, cfg.params, kappa, grid=_grid(cfg),
        n_q=cfg.solver.n_q, n_p=cfg.solver.n_p,
        scan_shrink=cfg.solver.scan_shrink, xtol=cfg.solver.wstar_tol)


def cmd_solve(cfg: RunConfig, args) -> int:
    opt = _solve_one(cfg, cfg.scenario.kappa)
    out = Path(cfg.run.outdir)
    out.mkdir(parents=True, exist_ok=True)
    opt.solve.policy.save(out / "policy.npz")
    r = opt.solve
    write_table(out / "solve_summary.csv",
                ["kappa", "Wstar", "value", "EW_per_year", "ES", "E_WT",
                 "grid", "wrap_mass"],
                [["inf" if math.isinf(r.kappa) else r.kappa, r.wstar, r.value,
                  r.ew_per_year, r.es, r.expected_wt,
                  f"{r.grid_shape[0]}x{r.grid_shape[1]}", r.wrap_mass]],
                cfg.fingerprint, cfg.run.seed,
                extra={"non_unimodal": opt.diagnostics["non_unimodal"]})
    print(f"W*={r.wstar:.3f} value={r.value:.4f} EW={r.ew_per_year:.4f} "
          f"ES={r.es:.4f} -> {out / 'policy.npz'}")
    return 0


def cmd_frontier(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    backend = getattr(args, "backend", "synthetic")
    evaluate = None
    if backend == "bootstrap":
        series = _series(cfg)
        def evaluate(policy, scenario, params):
            bc = BootstrapConfig(
                blocksize_months=cfg.run.blocksize_years * 12.0,
                horizon_months=int(scenario.horizon * 12),
                n_paths=cfg.run.paths, seed=cfg.run.seed)
            return evaluate_policy_bootstrap(policy, scenario, series, bc,
                                             mu_c_b=params.mu_c_b)
    points = sweep_kappa(
        cfg.scenario, cfg.params, cfg.run.kappas, grid=_grid(cfg),
        n_paths=cfg.run.paths, seed=cfg.run.seed, evaluate=evaluate,
        n_q=cfg.solver.n_q, n_p=cfg.solver.n_p,
        scan_shrink=cfg.solver.scan_shrink, xtol=cfg.solver.wstar_tol)
    write_frontier(out / "frontier.csv", points, cfg.fingerprint, cfg.run.seed,
                   extra={"backend": backend})
    if cfg.run.figures:
        render_frontier(out / "frontier.png", [(backend, points)])
    for p in points:
        print(f"kappa={p.kappa:g} EW={p.ew_per_year:.4f} ES={p.es:.4f} "
              f"median={p.median_wt:.4f} W*={p.wstar:.4f}")
    return 0


def cmd_baseline(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    backend = getattr(args, "backend", "synthetic")
    returns_fn = None
    if backend == "bootstrap":
        series = _series(cfg)
        returns_fn = bootstrap_returns(series, cfg.scenario.m,
                                       cfg.run.blocksize_years * 12.0)
    rows = []
    for p_const in cfg.run.p_grid:
        stats = simulate_constant(cfg.scenario, cfg.params, p_const,
                                  cfg.run.q_const, cfg.run.paths,
                                  cfg.run.seed, returns_fn=returns_fn)
        rows.append([p_const, stats.ew_per_year, stats.es, stats.median_wt])
        print(f"p={p_const:.2f} EW={stats.ew_per_year:.4f} ES={stats.es:.4f} "
              f"median={stats.median_wt:.4f}")
    write_table(out / "baseline.csv",
                ["p_const", "EW_per_year", "ES", "median_WT"], rows,
                cfg.fingerprint, cfg.run.seed,
                extra={"backend": backend, "q_const": cfg.run.q_const})
    return 0


def cmd_convergence(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    grids = [int(g) for g in (args.grids or "512,1024").split(",")]
    rows = []
    for n in grids:
        sub = RunConfig(cfg.scenario, cfg.params,
                        type(cfg.solver)(grid=n, n_q=cfg.solver.n_q,
                                         n_p=cfg.solver.n_p,
                                         scan_shrink=cfg.solver.scan_shrink,
                                         wstar_tol=cfg.solver.wstar_tol),
                        cfg.run)
        opt = _solve_one(sub, cfg.scenario.kappa)
        stats = simulate_policy(opt.solve.policy, cfg.scenario, cfg.params,
                                cfg.run.paths, cfg.run.seed,
                                expected_fingerprint=cfg.fingerprint)
        rows.append([f"{n}x{n}", opt.solve.es, opt.solve.ew_per_year,
                     opt.solve.value, stats.es, stats.ew_per_year, opt.wstar])
        print(f"grid {n}: value={opt.solve.value:.4f} ES_dp={opt.solve.es:.4f} "
              f"EW_dp={opt.solve.ew_per_year:.4f} ES_mc={stats.es:.4f} "
              f"EW_mc={stats.ew_per_year:.4f}")
    write_table(out / "convergence.csv",
                ["grid", "ES_dp", "EW_dp", "value", "ES_mc", "EW_mc", "Wstar"],
                rows, cfg.fingerprint, cfg.run.seed)
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    policy = ControlPolicy.load(_policy_path(cfg, args))
    g_mode = "random" if cfg.run.g_sd > 0.0 else "unit"
    stats = simulate_policy(policy, cfg.scenario, cfg.params, cfg.run.paths,
                            cfg.run.seed, g_mode=g_mode, g_sd=cfg.run.g_sd,
                            expected_fingerprint=cfg.fingerprint)
    write_table(out / "sim_summary.csv",
                ["EW_per_year", "ES", "median_WT", "paths", "g_mode"],
                [[stats.ew_per_year, stats.es, stats.median_wt,
                  stats.n_paths, g_mode]],
                cfg.fingerprint, cfg.run.seed)
    write_percentiles(out, stats, cfg.fingerprint, cfg.run.seed)
    if cfg.run.figures:
        render_percentiles(out, stats)
    print(f"EW={stats.ew_per_year:.4f} ES={stats.es:.4f} "
          f"median={stats.median_wt:.4f} (N={stats.n_paths}, G={g_mode})")
    return 0


def cmd_bootstrap(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    policy = ControlPolicy.load(_policy_path(cfg, args))
    policy.check_fingerprint(cfg.fingerprint)
    series = _series(cfg)
    bc = BootstrapConfig(blocksize_months=cfg.run.blocksize_years * 12.0,
                         horizon_months=int(cfg.scenario.horizon * 12),
                         n_paths=cfg.run.paths, seed=cfg.run.seed)
    g_mode = "random" if cfg.run.g_sd > 0.0 else "unit"
    stats = evaluate_policy_bootstrap(policy, cfg.scenario, series, bc,
                                      mu_c_b=cfg.params.mu_c_b,
                                      g_mode=g_mode, g_sd=cfg.run.g_sd)
    write_table(out / "bootstrap_summary.csv",
                ["EW_per_year", "ES", "median_WT", "paths",
                 "blocksize_years"],
                [[stats.ew_per_year, stats.es, stats.median_wt,
                  stats.n_paths, cfg.run.blocksize_years]],
                cfg.fingerprint, cfg.run.seed)
    write_percentiles(out, stats, cfg.fingerprint, cfg.run.seed)
    if cfg.run.figures:
        render_percentiles(out, stats, prefix="bootstrap_percentiles")
    print(f"EW={stats.ew_per_year:.4f} ES={stats.es:.4f} "
          f"median={stats.median_wt:.4f} (blocksize {cfg.run.blocksize_years}y)")
    return 0


def cmd_heatmaps(cfg: RunConfig, args) -> int:
    out = Path(cfg.run.outdir)
    policy = ControlPolicy.load(_policy_path(cfg, args))
    maps = export_heatmaps(policy)
    write_heatmaps(out, maps, cfg.fingerprint, cfg.run.seed)
    if cfg.run.figures:
        render_heatmaps(out, maps)
    print(f"wrote heat maps for {maps['dates'].size} dates x "
          f"{maps['wealth'].size} wealth nodes -> {out}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "frontier": cmd_frontier,
    "baseline": cmd_baseline,
    "convergence": cmd_convergence,
    "simulate": cmd_simulate,
    "bootstrap": cmd_bootstrap,
    "heatmaps": cmd_heatmaps,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tontine-overlay",
        description="Optimal tontine-overlay decumulation: solve, simulate, report.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="INI run configuration")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--paths", type=int, default=None)
        sp.add_argument("--grid", type=int, default=None)
        sp.add_argument("--kappa", default=None,
                        help="scalarization weight; 'inf' drops the reward term")
        sp.add_argument("--blocksize", type=float, default=None,
                        help="expected bootstrap blocksize in years")
        sp.add_argument("--no-tontine", action="store_true",
                        help="drop tontine gains and fees")
        sp.add_argument("--random-g", type=float, default=None, metavar="SD",
                        help="simulate with random group gain of this std dev")
        sp.add_argument("--fee-bps", type=float, default=None)
        sp.add_argument("--figures", action="store_true",
                        help="also render PNG figures next to the tables")
        if name in ("simulate", "bootstrap", "heatmaps"):
            sp.add_argument("--policy", default=None, help="stored policy file")
        if name in ("frontier", "baseline"):
            sp.add_argument("--backend", choices=("synthetic", "bootstrap"),
                            default="synthetic")
        if name == "convergence":
            sp.add_argument("--grids", default="512,1024",
                            help="comma-separated grid sizes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed, "paths": args.paths, "grid": args.grid,
        "kappa": args.kappa, "blocksize_years": args.blocksize,
        "no_tontine": args.no_tontine, "fee_bps": args.fee_bps,
        "outdir": args.out, "figures": args.figures,
        "g_sd": args.random_g,
    }
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
