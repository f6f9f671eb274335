"""Stored optimal controls: per-date withdrawal and stock-fraction tables.

The withdrawal q_i is a function of total wealth before withdrawals (after
tontine gains and fees); the stock fraction p_i is a function of wealth after
withdrawals.  Both are tabulated on a shared log-spaced wealth-knot vector
and read back piecewise-linearly in log wealth, clamped to the admissible
sets.  Serialization is a versioned npz archive and round-trips losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class PolicyMismatch(Exception):
    """Policy fingerprint does not match the scenario it is evaluated under."""


@dataclass
class ControlPolicy:
    w_knots: np.ndarray        # (n_w,) wealth levels, log-spaced
    q: np.ndarray              # (M+1, n_w); row M is zero (liquidation)
    p: np.ndarray              # (M+1, n_w); row M is zero
    wstar: float
    kappa: float               # math.inf allowed
    gains: np.ndarray          # (M+1,) tontine gain rates used when solving
    dts: np.ndarray            # (M+1,) interval lengths, dts[0] = 0
    fee: float
    q_min: float
    q_max: float
    fingerprint: str = ""

    def __post_init__(self):
        self.w_knots = np.asarray(self.w_knots, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        self.dts = np.asarray(self.dts, dtype=float)
        if self.q.shape != self.p.shape or self.q.shape[1] != self.w_knots.size:
            raise ValueError("q/p tables must be (M+1, n_knots)")
        if self.q.shape[0] != self.gains.size:
            raise ValueError("need one table row per rebalancing date")
        self._log_knots = np.log(self.w_knots)
        self._dlog = self._log_knots[1] - self._log_knots[0]

    @property
    def n_dates(self) -> int:
        """Number of rebalancing dates including the terminal liquidation."""
        return self.q.shape[0]

    def _read(self, table: np.ndarray, w: np.ndarray) -> np.ndarray:
        logw = np.log(np.maximum(np.asarray(w, dtype=float), self.w_knots[0]))
        idx = np.clip((logw - self._log_knots[0]) / self._dlog,
                      0.0, self.w_knots.size - 1.0)
        i0 = np.minimum(idx.astype(np.int64), self.w_knots.size - 2)
        t = idx - i0
        return table[i0] * (1.0 - t) + table[i0 + 1] * t

    def q_at(self, i: int, w_minus) -> np.ndarray:
        """Withdrawal at date i, clamped to the admissible set at w_minus."""
        w = np.atleast_1d(np.asarray(w_minus, dtype=float))
        if i == self.n_dates - 1:
            return np.zeros_like(w)
        raw = self._read(self.q[i], w)
        hi = np.where(w >= self.q_max, self.q_max, np.maximum(self.q_min, w))
        return np.clip(raw, self.q_min, hi)

    def p_at(self, i: int, w_plus) -> np.ndarray:
        """Stock fraction at date i; forced to zero at nonpositive wealth."""
        w = np.atleast_1d(np.asarray(w_plus, dtype=float))
        if i == self.n_dates - 1:
            return np.zeros_like(w)
        raw = np.clip(self._read(self.p[i], w), 0.0, 1.0)
        return np.where(w <= 0.0, 0.0, raw)

    def save(self, path: str | Path) -> None:
        np.savez(
            path, format_version=np.int64(FORMAT_VERSION),
            w_knots=self.w_knots, q=self.q, p=self.p,
            wstar=np.float64(self.wstar), kappa=np.float64(self.kappa),
            gains=self.gains, dts=self.dts, fee=np.float64(self.fee),
            q_min=np.float64(self.q_min), q_max=np.float64(self.q_max),
            fingerprint=np.str_(self.fingerprint))

    @classmethod
    def load(cls, path: str | Path) -> "ControlPolicy":
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"])
            if version != FORMAT_VERSION:
                raise ValueError(f"unsupported policy format v{version}")
            return cls(
                w_knots=z["w_knots"], q=z["q"], p=z["p"],
                wstar=float(z["wstar"]), kappa=float(z["kappa"]),
                gains=z["gains"], dts=z["dts"], fee=float(z["fee"]),
                q_min=float(z["q_min"]), q_max=float(z["q_max"]),
                fingerprint=str(z["fingerprint"]))

    def check_fingerprint(self, expected: str) -> None:
        if self.fingerprint and expected and self.fingerprint != expected:
            raise PolicyMismatch(
                f"policy was solved for fingerprint {self.fingerprint}, "
                f"evaluation scenario has {expected}")
