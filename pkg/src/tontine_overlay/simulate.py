"""Monte Carlo evaluation of stored controls and constant-(p, q) baselines.

Path mechanics at each rebalancing date: credit tontine gains and deduct
fees on total wealth, withdraw, rebalance, then evolve one interval.  A
withdrawal that leaves total wealth nonpositive puts the path in debt:
trading ceases (stock fraction zero), the withdrawal is pinned at the
minimum, and the (negative) balance accrues the bond return plus the
borrowing spread.  Paths are simulated in fixed-size chunks, each with its
own counter-based random stream, so results depend only on (seed, N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .market import ModelParams, sample_interval, stream_rng
from .policy import ControlPolicy
from .scenario import Scenario

CHUNK = 65536
PERCENTILE_SUBSAMPLE = 131072
PERCENTILE_LEVELS = (5, 50, 95)


@dataclass
class SimStats:
    """Summary statistics of one Monte Carlo (or bootstrap) evaluation."""

    ew_per_year: float
    es: float
    median_wt: float
    n_paths: int
    alpha: float
    wt: np.ndarray
    total_withdrawn: np.ndarray
    percentiles: dict
    percentile_subsample: int
    meta: dict = field(default_factory=dict)

    def ew_se(self) -> float:
        horizon = self.meta.get("horizon", 1.0)
        return float(np.std(self.total_withdrawn) / horizon / math.sqrt(self.n_paths))

    def es_se(self) -> float:
        return es_standard_error(self.wt, self.alpha)

    def median_se(self) -> float:
        return median_standard_error(self.wt)


def es_standard_error(samples: np.ndarray, alpha: float) -> float:
    """Asymptotic standard error of the lower-tail mean (influence function)."""
    n = samples.size
    k = max(1, int(math.floor(alpha * n)))
    part = np.partition(samples, k - 1)
    var_q = float(part[k - 1])
    es = float(np.mean(part[:k]))
    infl = np.minimum(samples - var_q, 0.0) / alpha + var_q - es
    return float(np.std(infl) / math.sqrt(n))

def median_standard_error(samples: np.ndarray) -> float:
    """Order-statistic spread estimator: (x_(n/2+sqrt(n)) - x_(n/2-sqrt(n)))/2."""
    n = samples.size
    half = n // 2
    step = max(1, int(math.sqrt(n)))
    x = np.sort(samples)
    lo = max(0, half - step)
    hi = min(n - 1, half + step)
    return float((x[hi] - x[lo]) / 2.0)


def _nearest_rank(values: np.ndarray, levels=PERCENTILE_LEVELS) -> np.ndarray:
    """Nearest-rank percentiles along the last axis."""
    n = values.shape[-1]
    out = np.empty(values.shape[:-1] + (len(levels),))
    srt = np.sort(values, axis=-1)
    for j, lev in enumerate(levels):
        k = min(n - 1, max(0, int(math.ceil(lev / 100.0 * n)) - 1))
        out[..., j] = srt[..., k]
    return out


def parametric_returns(params: ModelParams, m: int, dt: float):
    """Per-chunk exact sampler of (m,) one-interval log-return pairs per path."""
    def draw(rng: np.random.Generator, n: int):
        ls = np.empty((n, m))
        lb = np.empty((n, m))
        for i in range(m):
            pair = sample_interval(params, dt, rng, size=n)
            ls[:, i] = pair.log_return_s
            lb[:, i] = pair.log_return_b
        return ls, lb
    return draw


def run_paths(*, n_paths: int, seed: int, w0: float, m: int, dt: float,
              gains: np.ndarray, dts: np.ndarray, fee: float,
              mu_c_b: float, q_fn, p_fn, returns_fn,
              g_mode: str = "unit", g_sd: float = 0.1,
              alpha: float = 0.05, horizon: float | None = None,
              meta: dict | None = None) -> SimStats:
    """Shared path engine; q_fn(i, w_minus) and p_fn(i, w_plus) supply controls."""
    if n_paths < int(math.ceil(1.0 / alpha)):
        raise ValueError("need at least 1/alpha paths for a tail mean")
    if g_mode not in ("unit", "random"):
        raise ValueError("g_mode must be 'unit' or 'random'")
    horizon = m * dt if horizon is None else horizon
    wt = np.empty(n_paths)
    totals = np.empty(n_paths)
    sub_n = min(n_paths, PERCENTILE_SUBSAMPLE)
    rec_w = np.empty((m + 1, sub_n))
    rec_q = np.empty((m, sub_n))
    rec_p = np.empty((m, sub_n))

    for start in range(0, n_paths, CHUNK):
        n = min(CHUNK, n_paths - start)
        rng = stream_rng(seed, start)
        ls, lb = returns_fn(rng, n)
        if g_mode == "random":
            g_mat = np.maximum(rng.normal(1.0, g_sd, size=(m + 1, n)), 0.0)
        else:
            g_mat = np.ones((m + 1, n))
        s = np.zeros(n)
        b = np.full(n, float(w0))
        cum = np.zeros(n)
        rec = slice(start, min(start + n, sub_n)) if start < sub_n else None
        keep = (rec.stop - rec.start) if rec is not None else 0
        for i in range(m):
            w_minus = (s + b) * (1.0 + gains[i] * g_mat[i]) * math.exp(-dts[i] * fee)
            q = q_fn(i, w_minus)
            cum += q
            w_plus = w_minus - q
            p = p_fn(i, w_plus)
            in_debt = w_plus <= 0.0
            p = np.where(in_debt, 0.0, p)
            s = np.where(in_debt, 0.0, p * w_plus)
            b = np.where(in_debt, w_plus, (1.0 - p) * w_plus)
            if rec is not None:
                rec_w[i, rec] = w_minus[:keep]
                rec_q[i, rec] = q[:keep]
                rec_p[i, rec] = p[:keep]
            s = s * np.exp(ls[:, i])
            b = b * np.exp(lb[:, i] + in_debt * (mu_c_b * dt))
        w_final = (s + b) * (1.0 + gains[m] * g_mat[m]) * math.exp(-dts[m] * fee)
        if rec is not None:
            rec_w[m, rec] = w_final[:keep]
        wt[start:start + n] = w_final
        totals[start:start + n] = cum

    k = int(math.floor(alpha * n_paths))
    tail = np.partition(wt, k - 1)[:k]
    stats_meta = {"seed": seed, "g_mode": g_mode, "g_sd": g_sd,
                  "horizon": horizon, "percentile_rule": "nearest-rank",
                  **(meta or {})}
    return SimStats(
        ew_per_year=float(np.mean(totals) / horizon),
        es=float(np.mean(tail)),
        median_wt=float(np.median(wt)),
        n_paths=n_paths, alpha=alpha, wt=wt, total_withdrawn=totals,
        percentiles={
            "wealth": _nearest_rank(rec_w),
            "withdrawal": _nearest_rank(rec_q),
            "stock_fraction": _nearest_rank(rec_p),
        },
        percentile_subsample=sub_n, meta=stats_meta)


def simulate_policy(policy: ControlPolicy, scenario: Scenario,
                    params: ModelParams, n_paths: int, seed: int, *,
                    g_mode: str = "unit", g_sd: float = 0.1,
                    expected_fingerprint: str | None = None,
                    returns_fn=None) -> SimStats:
    """Evaluate a stored control by Monte Carlo over the parametric model."""
    if expected_fingerprint is not None:
        policy.check_fingerprint(expected_fingerprint)
    if returns_fn is None:
        returns_fn = parametric_returns(params, scenario.m, scenario.dt)
    return run_paths(
        n_paths=n_paths, seed=seed, w0=scenario.w0, m=scenario.m,
        dt=scenario.dt, gains=policy.gains, dts=policy.dts, fee=policy.fee,
        mu_c_b=params.mu_c_b, q_fn=policy.q_at, p_fn=policy.p_at,
        returns_fn=returns_fn, g_mode=g_mode, g_sd=g_sd,
        alpha=scenario.alpha, horizon=scenario.horizon,
        meta={"backend": "synthetic", "wstar": policy.wstar,
              "kappa": policy.kappa})


def simulate_constant(scenario: Scenario, params: ModelParams,
                      p_const: float, q_const: float, n_paths: int,
                      seed: int, *, returns_fn=None) -> SimStats:
    """Constant stock weight and constant withdrawal; no tontine gains, no fees."""
    if not 0.0 <= p_const <= 1.0:
        raise ValueError("p_const must lie in [0, 1]")
    if returns_fn is None:
        returns_fn = parametric_returns(params, scenario.m, scenario.dt)
    m = scenario.m
    gains = np.zeros(m + 1)
    dts = np.full(m + 1, scenario.dt)
    dts[0] = 0.0

    def q_fn(i, w_minus):
        return np.full_like(w_minus, float(q_const))

    def p_fn(i, w_plus):
        return np.full_like(w_plus, float(p_const))

    return run_paths(
        n_paths=n_paths, seed=seed, w0=scenario.w0, m=m, dt=scenario.dt,
        gains=gains, dts=dts, fee=0.0, mu_c_b=params.mu_c_b,
        q_fn=q_fn, p_fn=p_fn, returns_fn=returns_fn,
        alpha=scenario.alpha, horizon=scenario.horizon,
        meta={"backend": "constant", "p_const": p_const, "q_const": q_const})


def export_heatmaps(policy: ControlPolicy, wealth_lo: float = 1.0,
                    wealth_hi: float = 1e4, n_wealth: int = 256,
                    dates=None) -> dict:
    """(date x wealth) grids of stock fraction and normalized withdrawal."""
    if dates is None:
        dates = np.arange(policy.n_dates - 1)
    dates = np.asarray(dates, dtype=int)
    w = np.geomspace(wealth_lo, wealth_hi, n_wealth)
    frac = np.empty((dates.size, n_wealth))
    qnorm = np.empty((dates.size, n_wealth))
    span = max(policy.q_max - policy.q_min, 1e-300)
    for row, i in enumerate(dates):
        frac[row] = policy.p_at(int(i), w)
        qnorm[row] = (policy.q_at(int(i), w) - policy.q_min) / span
    return {"dates": dates, "wealth": w, "stock_fraction": frac,
            "withdrawal_norm": qnorm}
