"""Mortality data, tontine gain rates, fee accrual and group-gain accounting.

A member alive over (t_{i-1}, t_i] with conditional one-year death probability
q earns the nominal gain rate q/(1-q) on the account balance: the stake -q*v
forfeited on death is exactly offset in expectation by the credit
(1-q)*gain*v earned on survival.  Realized pools scale the nominal credits by
the group gain G so that credits disbursed equal wealth forfeited.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class PoolCollapse(Exception):
    """All pool members died (or no survivor holds a nominal credit)."""


def gain_rate(q: float) -> float:
    """Nominal per-period tontine gain rate q/(1-q)."""
    if not 0.0 <= q < 1.0:
        raise ValueError(f"death probability must lie in [0, 1), got {q}")
    return q / (1.0 - q)


@dataclass(frozen=True)
class MortalityTable:
    """Per-age conditional one-year death probabilities."""

    ages: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "q", q)
        if ages.size != q.size or ages.size == 0:
            raise ValueError("ages and q must be equal-length and nonempty")
        if np.any(np.diff(ages) != 1):
            raise ValueError("ages must be strictly increasing and contiguous")
        if np.any((q < 0.0) | (q >= 1.0)):
            raise ValueError("death probabilities must lie in [0, 1)")

    @classmethod
    def from_csv(cls, path: str | Path) -> "MortalityTable":
        """Read an 'age,q' comma-separated table; '#' lines are comments."""
        ages, qs = [], []
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh)
                    if r and not r[0].lstrip().startswith("#")]
        if not rows or [c.strip() for c in rows[0][:2]] != ["age", "q"]:
            raise ValueError(f"{path}: expected header line 'age,q'")
        for row in rows[1:]:
            ages.append(int(row[0]))
            qs.append(float(row[1]))
        return cls(np.array(ages), np.array(qs))

    def q_at(self, age: int) -> float:
        idx = int(age) - int(self.ages[0])
        if idx < 0 or idx >= self.ages.size:
            raise KeyError(f"age {age} not covered by table "
                           f"[{self.ages[0]}, {self.ages[-1]}]")
        return float(self.q[idx])


@dataclass(frozen=True)
class TontineSchedule:
    """Gain rates, interval lengths and fee applied at each rebalancing date.

    gains[i] is the rate credited at t_i for survival over (t_{i-1}, t_i];
    there is no gain and no fee accrual at inception (gains[0] = 0, dt_0 = 0).
    """

    gains: np.ndarray
    dts: np.ndarray
    fee: float

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        dts = np.asarray(self.dts, dtype=float)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "dts", dts)
        if gains.size != dts.size or gains.size == 0:
            raise ValueError("gains and dts must be equal-length and nonempty")
        if gains[0] != 0.0 or dts[0] != 0.0:
            raise ValueError("inception entry must have zero gain and zero dt")
        if np.any(gains < 0.0) or self.fee < 0.0:
            raise ValueError("gains and fee must be nonnegative")

    @property
    def n_dates(self) -> int:
        return self.gains.size


def build_schedule(table: MortalityTable, start_age: int, m: int,
                   dt: float, fee: float) -> TontineSchedule:
    """Schedule for dates t_0..t_M: gains[i] = q/(1-q) at the age attained at t_{i-1}."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    gains = np.zeros(m + 1)
    dts = np.full(m + 1, float(dt))
    dts[0] = 0.0
    for i in range(1, m + 1):
        age = start_age + (i - 1) * dt
        if abs(age - round(age)) > 1e-9:
            raise ValueError("rebalancing dates must fall on integer ages "
                             "for annual-table lookups")
        gains[i] = gain_rate(table.q_at(int(round(age))))
    return TontineSchedule(gains, dts, float(fee))


def flat_schedule(m: int, dt: float) -> TontineSchedule:
    """No-tontine variant: zero gains, zero fee."""
    dts = np.full(m + 1, float(dt))
    dts[0] = 0.0
    return TontineSchedule(np.zeros(m + 1), dts, 0.0)


def wealth_before_withdrawal(s, b, gain: float, dt_i: float, fee: float,
                             g_mult=1.0):
    """Total wealth after tontine gains and fees, before the withdrawal.

    The gain factor multiplies total wealth even when it is negative, and
    fees keep accruing in the debt state.
    """
    return (np.asarray(s) + np.asarray(b)) * (1.0 + gain * g_mult) * np.exp(-dt_i * fee)


@dataclass
class PoolSnapshot:
    """Per-member state of a tontine pool over one period."""

    alive_before: np.ndarray
    alive_after: np.ndarray
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.alive_before = np.asarray(self.alive_before, dtype=bool)
        self.alive_after = np.asarray(self.alive_after, dtype=bool)
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if np.any(self.alive_after & ~self.alive_before):
            raise ValueError("alive_after implies alive_before")


def group_gain(pool: PoolSnapshot) -> float:
    """Realized group gain: wealth forfeited by deaths over nominal survivor credits."""
    member = pool.alive_before
    died = member & ~pool.alive_after
    survived = member & pool.alive_after
    forfeited = float(np.sum(pool.v[died]))
    nominal = float(np.sum(pool.v[survived] * pool.q[survived] / (1.0 - pool.q[survived])))
    if nominal <= 0.0:
        if forfeited == 0.0:
            return 0.0
        raise PoolCollapse("no survivor carries a nominal credit; "
                           "remaining balances revert to estates")
    return forfeited / nominal


def survivor_credits(pool: PoolSnapshot, g: float) -> np.ndarray:
    """Actual mortality credits G * v * q/(1-q) for surviving members."""
    survived = pool.alive_before & pool.alive_after
    credits = np.zeros_like(pool.v)
    credits[survived] = g * pool.v[survived] * pool.q[survived] / (1.0 - pool.q[survived])
    return credits
