"""Monthly historical series ingestion and stationary block bootstrap.

Resampling uses the memoryless form of the stationary bootstrap: each month,
with probability v = 1/blocksize the sample jumps to a uniformly random
month of the source series, otherwise it continues with the next month,
wrapping circularly at the series end.  Run lengths are then geometric,
P(b = k) = (1-v)^(k-1) * v, with expected blocksize 1/v.  Both series are
driven by the same month indices (paired draws), and twelve consecutive
monthly log returns are summed into each annual rebalancing interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import stream_rng
from .policy import ControlPolicy
from .scenario import Scenario
from .simulate import SimStats, run_paths

BOOT_CHUNK = 16384      # caps the (paths x months) index buffers


@dataclass(frozen=True)
class ReturnSeries:
    """Aligned monthly real log returns for the stock and bond indices."""

    months: tuple
    r_s: np.ndarray
    r_b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_s", np.asarray(self.r_s, dtype=float))
        object.__setattr__(self, "r_b", np.asarray(self.r_b, dtype=float))
        if len(self.months) != self.r_s.size or self.r_s.size != self.r_b.size:
            raise ValueError("months, r_s and r_b must be aligned")

    def __len__(self) -> int:
        return self.r_s.size


@dataclass(frozen=True)
class BootstrapConfig:
    blocksize_months: float
    horizon_months: int
    n_paths: int
    seed: int

    def __post_init__(self):
        if self.blocksize_months < 1.0:
            raise ValueError("expected blocksize must be at least one month")
        if self.horizon_months < 12:
            raise ValueError("horizon must cover at least one year")


def _parse_month(tok: str) -> tuple:
    parts = tok.strip().split("-")
    return int(parts[0]), int(parts[1])


def load_and_deflate(path: str | Path) -> ReturnSeries:
    """Read 'date,stock_index,bond_index,cpi' and form real monthly log returns."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows or [c.strip() for c in rows[0][:4]] != \
            ["date", "stock_index", "bond_index", "cpi"]:
        raise ValueError(f"{path}: expected header 'date,stock_index,bond_index,cpi'")
    dates, levels = [], []
    for row in rows[1:]:
        dates.append(_parse_month(row[0]))
        levels.append([float(row[1]), float(row[2]), float(row[3])])
    levels = np.array(levels)
    if np.any(levels <= 0.0):
        raise ValueError("index and CPI levels must be positive")
    for prev, cur in zip(dates, dates[1:]):
        expect = (prev[0] + (prev[1] == 12), prev[1] % 12 + 1)
        if cur != expect:
            raise ValueError(f"monthly dates must be contiguous; gap after {prev}")
    logs = np.log(levels)
    d = np.diff(logs, axis=0)
    real_s = d[:, 0] - d[:, 2]
    real_b = d[:, 1] - d[:, 2]
    months = tuple(f"{y:04d}-{m:02d}" for y, m in dates[1:])
    return ReturnSeries(months, real_s, real_b)


def _sample_indices(rng: np.random.Generator, n_paths: int, n_months: int,
                    series_len: int, blocksize: float,
                    first_start: int | None = None) -> np.ndarray:
    """(n_paths, n_months) month indices of the paired circular resample."""
    v = 1.0 / blocksize
    restart = rng.random((n_paths, n_months)) < v
    starts = rng.integers(0, series_len, size=(n_paths, n_months))
    idx = np.empty((n_paths, n_months), dtype=np.int64)
    idx[:, 0] = first_start if first_start is not None else starts[:, 0]
    for t in range(1, n_months):
        cont = (idx[:, t - 1] + 1) % series_len
        idx[:, t] = np.where(restart[:, t], starts[:, t], cont)
    return idx


def stationary_block_sample(series: ReturnSeries, config: BootstrapConfig,
                            rng: np.random.Generator,
                            first_start: int | None = None):
    """One paired resample, aggregated to annual log-return pairs."""
    if len(series) < 12:
        raise ValueError("series must cover at least 12 months")
    idx = _sample_indices(rng, 1, config.horizon_months, len(series),
                          config.blocksize_months, first_start)[0]
    years = config.horizon_months // 12
    ann_s = series.r_s[idx][:years * 12].reshape(years, 12).sum(axis=1)
    ann_b = series.r_b[idx][:years * 12].reshape(years, 12).sum(axis=1)
    return ann_s, ann_b


def bootstrap_returns(series: ReturnSeries, m_years: int,
                      blocksize_months: float):
    """Per-chunk sampler of (m_years,) annual log-return pairs per path."""
    if len(series) < 12:
        raise ValueError("series must cover at least 12 months")
    n_months = 12 * m_years

    def draw(rng: np.random.Generator, n: int):
        ls = np.empty((n, m_years))
        lb = np.empty((n, m_years))
        for lo in range(0, n, BOOT_CHUNK):
            hi = min(lo + BOOT_CHUNK, n)
            idx = _sample_indices(rng, hi - lo, n_months, len(series),
                                  blocksize_months)
            ls[lo:hi] = series.r_s[idx].reshape(hi - lo, m_years, 12).sum(axis=2)
            lb[lo:hi] = series.r_b[idx].reshape(hi - lo, m_years, 12).sum(axis=2)
        return ls, lb
    return draw


def evaluate_policy_bootstrap(policy: ControlPolicy, scenario: Scenario,
                              series: ReturnSeries, config: BootstrapConfig,
                              mu_c_b: float = 0.02, *,
                              g_mode: str = "unit", g_sd: float = 0.1) -> SimStats:
    """Simulator path mechanics with bootstrapped instead of parametric returns."""
    if scenario.dt != 1.0:
        raise ValueError("bootstrap evaluation assumes annual rebalancing")
    returns_fn = bootstrap_returns(series, scenario.m, config.blocksize_months)
    return run_paths(
        n_paths=config.n_paths, seed=config.seed, w0=scenario.w0,
        m=scenario.m, dt=scenario.dt, gains=policy.gains, dts=policy.dts,
        fee=policy.fee, mu_c_b=mu_c_b, q_fn=policy.q_at, p_fn=policy.p_at,
        returns_fn=returns_fn, g_mode=g_mode, g_sd=g_sd,
        alpha=scenario.alpha, horizon=scenario.horizon,
        meta={"backend": "bootstrap",
              "blocksize_months": config.blocksize_months,
              "series_months": len(series)})
