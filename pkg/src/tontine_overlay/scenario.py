"""Investment scenario: horizon, withdrawal bounds, fee, tontine switch.

All monetary quantities are in thousands of real dollars.  Rebalancing and
withdrawals occur at t_0 = 0, dt, 2*dt, ..., T; the portfolio is liquidated
at T with no withdrawal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

from .mortality import MortalityTable, TontineSchedule, build_schedule, flat_schedule

INFINITE_KAPPA = math.inf


def default_mortality_table() -> MortalityTable:
    ref = resources.files("tontine_overlay.data").joinpath("cpm2014_male_approx.csv")
    with resources.as_file(ref) as path:
        return MortalityTable.from_csv(path)


@dataclass(frozen=True)
class Scenario:
    """Full investment configuration (base case: 65-year-old, 30-year horizon)."""

    w0: float = 1000.0
    horizon: float = 30.0
    m: int = 30
    q_min: float = 40.0
    q_max: float = 80.0
    alpha: float = 0.05
    kappa: float = 0.185
    epsilon: float = -1e-4
    fee: float = 0.005
    start_age: int = 65
    tontine_enabled: bool = True
    mortality: MortalityTable | None = None

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise ValueError("q_min must not exceed q_max")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative (math.inf allowed)")
        if self.m < 1 or self.horizon <= 0.0:
            raise ValueError("need m >= 1 and a positive horizon")
        if self.tontine_enabled and self.mortality is None:
            object.__setattr__(self, "mortality", default_mortality_table())

    @property
    def dt(self) -> float:
        return self.horizon / self.m

    @property
    def kappa_is_infinite(self) -> bool:
        return math.isinf(self.kappa)

    def schedule(self) -> TontineSchedule:
        if not self.tontine_enabled:
            return flat_schedule(self.m, self.dt)
        return build_schedule(self.mortality, self.start_age, self.m, self.dt, self.fee)

    def with_kappa(self, kappa: float) -> "Scenario":
        return replace(self, kappa=kappa)

    def without_tontine(self) -> "Scenario":
        """No tontine gains and no fees; everything else unchanged."""
        return replace(self, tontine_enabled=False, fee=0.0)

    def to_dict(self) -> dict:
        d = {
            "w0": self.w0, "horizon": self.horizon, "m": self.m,
            "q_min": self.q_min, "q_max": self.q_max, "alpha": self.alpha,
            "kappa": "inf" if self.kappa_is_infinite else self.kappa,
            "epsilon": self.epsilon, "fee": self.fee,
            "start_age": self.start_age, "tontine_enabled": self.tontine_enabled,
        }
        if self.tontine_enabled:
            d["gains"] = [round(float(g), 12) for g in self.schedule().gains]
        return d
