"""EW and ES functionals, the outer W* optimization, and kappa sweeps.

The scalarized objective E[sum q] + kappa * ES is decomposed by writing the
expected shortfall through its variational form

    ES_alpha = sup_{W*} ( W* + E[min(W_T - W*, 0)] / alpha )

so that for fixed W* the inner problem is a standard dynamic program; the
outer problem is a one-dimensional maximization over W*.  The W* found at
time zero stays fixed afterwards: re-simulating a stored policy never
re-optimizes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import fingerprint_for
from .market import ModelParams
from .scenario import Scenario
from .simulate import simulate_policy
from .solver import FourierStepper, SolveResult, SolverGrid, solve_policy

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def es_from_samples(wt, alpha: float) -> float:
    """Mean of the floor(alpha*N) smallest terminal wealths."""
    wt = np.asarray(wt, dtype=float)
    if wt.size == 0:
        raise ValueError("empty sample set")
    if wt.size < 1.0 / alpha:
        raise ValueError("need at least 1/alpha samples")
    k = int(math.floor(alpha * wt.size))
    return float(np.mean(np.partition(wt, k - 1)[:k]))


def rockafellar_value(wt, wstar: float, alpha: float) -> float:
    """W* + E[min(W_T - W*, 0)] / alpha; its sup over W* equals the tail mean."""
    wt = np.asarray(wt, dtype=float)
    if wt.size == 0:
        raise ValueError("empty sample set")
    return float(wstar + np.mean(np.minimum(wt - wstar, 0.0)) / alpha)


def wstar_ladder(w0: float, n_neg: int = 20, n_pos: int = 43) -> np.ndarray:
    """64 coarse candidates spanning [-W0, 20*W0], geometric on each side of 0."""
    neg = -w0 * np.geomspace(1.0, 0.005, n_neg)
    pos = w0 * np.geomspace(2e-4, 20.0, n_pos)
    return np.sort(np.concatenate([neg, [0.0], pos]))


@dataclass
class WstarResult:
    wstar: float
    value: float
    solve: SolveResult
    scan: list
    diagnostics: dict = field(default_factory=dict)


def _golden_max(fn, lo: float, hi: float, xtol: float):
    """Golden-section maximization on [lo, hi]; returns (x, f(x), evals)."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    evals = [(c, fc), (d, fd)]
    while (b - a) > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
            evals.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
            evals.append((d, fd))
    x, fx = max(evals, key=lambda t: t[1])
    return x, fx, evals


def optimize_wstar(scenario: Scenario, params: ModelParams,
                   kappa: float | None = None, *,
                   grid: SolverGrid | None = None, n_q: int = 41,
                   n_p: int = 101, scan_shrink: int = 4,
                   scan_min_nodes: int = 256, xtol: float = 0.5,
                   ladder: np.ndarray | None = None) -> WstarResult:
    """Maximize V(0, W0, W*, 0-) over W*: coarse ladder scan, then
    golden-section refinement of the bracketing interval on the target grid.

    The scan runs on a coarsened grid (same bounds) to locate the bracket;
    a non-unimodal scan falls back to refining the top three brackets.
    """
    if grid is None:
        grid = SolverGrid()
    if kappa is None:
        kappa = scenario.kappa
    if ladder is None:
        ladder = wstar_ladder(scenario.w0)
    fp = fingerprint_for(scenario, params)

    shrink = max(1, scan_shrink)
    n_scan_s = max(scan_min_nodes, grid.n_s // shrink)
    n_scan_b = max(scan_min_nodes, grid.n_b // shrink)
    if (n_scan_s, n_scan_b) != (grid.n_s, grid.n_b):
        scan_grid = SolverGrid(
            n_s=n_scan_s, n_b=n_scan_b,
            s_min=grid.s_min, s_max=grid.s_max,
            b_min=grid.b_min, b_max=grid.b_max,
            d_min=grid.d_min, d_max=grid.d_max)
    else:
        scan_grid = grid
    scan_stepper = FourierStepper(scan_grid, params, scenario.dt)
    scan = []
    for w in ladder:
        res = solve_policy(scenario, params, w, scan_grid, kappa=kappa,
                           n_q=n_q, n_p=n_p, compute_stats=False,
                           collect_policy=False, stepper=scan_stepper)
        scan.append((float(w), res.value))
    values = np.array([v for _, v in scan])

    # local maxima of the scan curve (plateau-tolerant)
    peaks = [i for i in range(len(ladder))
             if (i == 0 or values[i] >= values[i - 1])
             and (i == len(ladder) - 1 or values[i] > values[i + 1])]
    peaks.sort(key=lambda i: -values[i])
    non_unimodal = len(peaks) > 1
    brackets = peaks[:3] if non_unimodal else peaks[:1]

    stepper = FourierStepper(grid, params, scenario.dt)
    cache: dict = {}

    def objective(w: float) -> float:
        key = round(float(w), 9)
        if key not in cache:
            cache[key] = solve_policy(
                scenario, params, w, grid, kappa=kappa, n_q=n_q, n_p=n_p,
                compute_stats=False, collect_policy=False,
                stepper=stepper).value
        return cache[key]

    best_x, best_v = None, -np.inf
    for k in brackets:
        lo = ladder[max(0, k - 1)]
        hi = ladder[min(len(ladder) - 1, k + 1)]
        x, fx, _ = _golden_max(objective, lo, hi, xtol)
        if fx > best_v:
            best_x, best_v = x, fx

    final = solve_policy(scenario, params, best_x, grid, kappa=kappa,
                         n_q=n_q, n_p=n_p, compute_stats=True,
                         collect_policy=True, stepper=stepper,
                         fingerprint=fp)
    return WstarResult(
        wstar=float(best_x), value=final.value, solve=final, scan=scan,
        diagnostics={"non_unimodal": non_unimodal,
                     "brackets_refined": len(brackets),
                     "scan_grid": (scan_grid.n_s, scan_grid.n_b),
                     "evaluations": len(cache)})


@dataclass
class FrontierPoint:
    kappa: float
    ew_per_year: float
    es: float
    median_wt: float
    wstar: float
    value: float
    status: str = "ok"


def pareto_filter(points: list) -> list:
    """Drop points dominated in (ES, EW); retained EW decreases as ES increases."""
    kept = []
    for p in points:
        if p.status != "ok":
            continue
        dominated = any(
            o is not p and o.status == "ok"
            and o.es >= p.es and o.ew_per_year >= p.ew_per_year
            and (o.es > p.es or o.ew_per_year > p.ew_per_year)
            for o in points)
        if not dominated:
            kept.append(p)
    return sorted(kept, key=lambda p: p.es)


def sweep_kappa(scenario: Scenario, params: ModelParams, kappa_list,
                *, grid: SolverGrid | None = None, n_paths: int = 100_000,
                seed: int = 1, evaluate=None, pareto: bool = True,
                **wstar_kw) -> list:
    """Trace the EW-ES frontier: per kappa, optimize W* and evaluate by MC.

    `evaluate(policy, scenario, params) -> SimStats` may be supplied to swap
    the synthetic-market evaluator for a bootstrap one.
    """
    kappa_list = list(kappa_list)
    if not kappa_list:
        raise ValueError("kappa list must be nonempty")
    points = []
    for kappa in kappa_list:
        try:
            opt = optimize_wstar(scenario, params, kappa, grid=grid, **wstar_kw)
            policy = opt.solve.policy
            if evaluate is None:
                stats = simulate_policy(policy, scenario.with_kappa(kappa),
                                        params, n_paths, seed)
            else:
                stats = evaluate(policy, scenario.with_kappa(kappa), params)
            points.append(FrontierPoint(
                kappa=float(kappa), ew_per_year=stats.ew_per_year,
                es=stats.es, median_wt=stats.median_wt,
                wstar=opt.wstar, value=opt.value))
        except Exception as exc:   # keep sweeping; report the failed point
            points.append(FrontierPoint(
                kappa=float(kappa), ew_per_year=math.nan, es=math.nan,
                median_wt=math.nan, wstar=math.nan, value=math.nan,
                status=f"error: {exc}"))
    return pareto_filter(points) if pareto else points
