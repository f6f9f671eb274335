"""Correlated double-exponential jump-diffusion model for the stock and bond indices.

Both indices are real (inflation-adjusted) total-return indices.  For each
index the log jump size y = log(xi) is double-exponential,

    f(y) = u * eta1 * exp(-eta1 * y)        y >= 0
         = (1 - u) * eta2 * exp(eta2 * y)   y < 0

with compensator gamma = E[xi - 1] = u*eta1/(eta1-1) + (1-u)*eta2/(eta2+1) - 1.
No control acts between rebalancing dates, so the log increment of an index
over an interval dt is known in closed form:

    d(log S) = (mu - sigma^2/2 - lambda*gamma) dt + sigma sqrt(dt) Z + sum_k Y_k

where Z is standard normal (stock and bond diffusions have correlation
rho_sb), the jump count is Poisson(lambda*dt) and the Y_k are i.i.d.
double-exponential draws.  Stock and bond jump processes are mutually
independent.  The borrowing spread mu_c_b is stored here but added to the
bond drift only while total wealth is negative; that dispatch belongs to the
solver and the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class AnnualReturnPair(NamedTuple):
    """One-interval log growth of the two indices, absent any control."""

    log_return_s: np.ndarray | float
    log_return_b: np.ndarray | float


@dataclass(frozen=True)
class ModelParams:
    """Annualized real-return parameters of the two jump diffusions."""

    mu_s: float
    sigma_s: float
    lambda_s: float
    u_s: float
    eta1_s: float
    eta2_s: float
    mu_b: float
    sigma_b: float
    lambda_b: float
    u_b: float
    eta1_b: float
    eta2_b: float
    rho_sb: float
    mu_c_b: float

    def __post_init__(self):
        if self.sigma_s <= 0 or self.sigma_b < 0:
            raise ValueError("need sigma_s > 0 and sigma_b >= 0")
        if self.lambda_s < 0 or self.lambda_b < 0:
            raise ValueError("jump intensities must be nonnegative")
        for u in (self.u_s, self.u_b):
            if not 0.0 <= u <= 1.0:
                raise ValueError("up-jump probability must lie in [0, 1]")
        if not -1.0 <= self.rho_sb <= 1.0:
            raise ValueError("rho_sb must lie in [-1, 1]")
        if self.mu_c_b < 0:
            raise ValueError("borrowing spread must be nonnegative")
        for eta1 in (self.eta1_s, self.eta1_b):
            if eta1 <= 1.0:
                raise ValueError("eta1 must exceed 1 (finite jump mean)")
        for eta2 in (self.eta2_s, self.eta2_b):
            if eta2 <= 0.0:
                raise ValueError("eta2 must be positive")

    @classmethod
    def default(cls) -> "ModelParams":
        """Base parameter set: annualized fit to real CRSP cap-weighted stocks
        and real 30-day T-bills, monthly data 1926-2020."""
        return cls(
            mu_s=0.08912, sigma_s=0.1460, lambda_s=0.3263,
            u_s=0.2258, eta1_s=4.3625, eta2_s=5.5335,
            mu_b=0.0046, sigma_b=0.0130, lambda_b=0.5053,
            u_b=0.3958, eta1_b=65.801, eta2_b=57.793,
            rho_sb=0.08420, mu_c_b=0.02,
        )

    # Per-index convenience tuples (u, eta1, eta2, lambda)
    @property
    def stock_jumps(self):
        return self.u_s, self.eta1_s, self.eta2_s, self.lambda_s

    @property
    def bond_jumps(self):
        return self.u_b, self.eta1_b, self.eta2_b, self.lambda_b


def jump_compensator(u: float, eta1: float, eta2: float) -> float:
    """E[xi - 1] for the double-exponential jump multiplier xi = exp(y)."""
    if eta1 <= 1.0:
        raise ValueError("eta1 <= 1 gives an infinite jump mean")
    if eta2 <= 0.0:
        raise ValueError("eta2 must be positive")
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    return u * eta1 / (eta1 - 1.0) + (1.0 - u) * eta2 / (eta2 + 1.0) - 1.0


def jump_log_mean(u: float, eta1: float, eta2: float) -> float:
    """E[y] of the double-exponential log jump size."""
    return u / eta1 - (1.0 - u) / eta2


def jump_log_density(y, u: float, eta1: float, eta2: float):
    """Density f(y) of the log jump size; integrates to 1, mass u on y >= 0."""
    if eta1 <= 1.0 or eta2 <= 0.0 or not 0.0 <= u <= 1.0:
        raise ValueError("invalid double-exponential parameters")
    y = np.asarray(y, dtype=float)
    pos = u * eta1 * np.exp(-eta1 * np.clip(y, 0.0, None))
    neg = (1.0 - u) * eta2 * np.exp(eta2 * np.clip(y, None, 0.0))
    out = np.where(y >= 0.0, pos, neg)
    return out if out.ndim else float(out)


def _jump_char(omega, u: float, eta1: float, eta2: float):
    """E[exp(i omega y)] of the double-exponential log jump size."""
    omega = np.asarray(omega, dtype=complex)
    return u * eta1 / (eta1 - 1j * omega) + (1.0 - u) * eta2 / (eta2 + 1j * omega)


def stock_log_drift(params: ModelParams) -> float:
    """Drift of log S between rebalancing dates (before jumps)."""
    gam = jump_compensator(params.u_s, params.eta1_s, params.eta2_s)
    return params.mu_s - 0.5 * params.sigma_s ** 2 - params.lambda_s * gam


def bond_log_drift(params: ModelParams, in_debt: bool = False) -> float:
    """Drift of log B between rebalancing dates; spread applies while in debt."""
    gam = jump_compensator(params.u_b, params.eta1_b, params.eta2_b)
    mu = params.mu_b + (params.mu_c_b if in_debt else 0.0)
    return mu - 0.5 * params.sigma_b ** 2 - params.lambda_b * gam


def characteristic_exponent(params: ModelParams, omega_s, omega_b):
    """Exponent Phi with E[exp(i w_s dx + i w_b dy)] = exp(Phi * dt).

    dx, dy are the log-index increments in the solvent regime (no borrowing
    spread).  Phi(0, 0) = 0 and Phi(-w) = conj(Phi(w)).
    """
    ws = np.asarray(omega_s, dtype=complex)
    wb = np.asarray(omega_b, dtype=complex)
    a_s = stock_log_drift(params)
    a_b = bond_log_drift(params, in_debt=False)
    quad = 0.5 * (
        (params.sigma_s * ws) ** 2
        + 2.0 * params.rho_sb * params.sigma_s * params.sigma_b * ws * wb
        + (params.sigma_b * wb) ** 2
    )
    phi = (
        1j * ws * a_s
        + 1j * wb * a_b
        - quad
        + params.lambda_s * (_jump_char(ws, params.u_s, params.eta1_s, params.eta2_s) - 1.0)
        + params.lambda_b * (_jump_char(wb, params.u_b, params.eta1_b, params.eta2_b) - 1.0)
    )
    return phi


def debt_characteristic_exponent(params: ModelParams, omega):
    """1-D exponent of the log-debt increment: bond dynamics plus the spread."""
    w = np.asarray(omega, dtype=complex)
    a = bond_log_drift(params, in_debt=True)
    phi = (
        1j * w * a
        - 0.5 * (params.sigma_b * w) ** 2
        + params.lambda_b * (_jump_char(w, params.u_b, params.eta1_b, params.eta2_b) - 1.0)
    )
    return phi


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for worker-count-independent parallel draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(stream)))))


def _compound_jump_sums(rng: np.random.Generator, lam_dt: float,
                        u: float, eta1: float, eta2: float, n: int) -> np.ndarray:
    """Sum of a Poisson(lam_dt) number of double-exponential log jumps, per sample."""
    out = np.zeros(n)
    if lam_dt <= 0.0:
        return out
    counts = rng.poisson(lam_dt, n)
    total = int(counts.sum())
    if total == 0:
        return out
    mags = rng.exponential(size=total)
    up = rng.random(total) < u
    y = np.where(up, mags / eta1, -mags / eta2)
    ends = np.cumsum(counts)
    cum = np.concatenate(([0.0], np.cumsum(y)))
    return cum[ends] - cum[ends - counts]


def sample_interval(params: ModelParams, dt: float, rng: np.random.Generator,
                    size: int | None = None) -> AnnualReturnPair:
    """Exact one-interval sample of (log stock return, log bond return).

    No spread term: the debt-state drift adjustment is applied by the caller.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = 1 if size is None else int(size)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    zb = params.rho_sb * z1 + np.sqrt(1.0 - params.rho_sb ** 2) * z2
    sq = np.sqrt(dt)
    ls = stock_log_drift(params) * dt + params.sigma_s * sq * z1
    lb = bond_log_drift(params) * dt + params.sigma_b * sq * zb
    ls = ls + _compound_jump_sums(rng, params.lambda_s * dt, params.u_s,
                                  params.eta1_s, params.eta2_s, n)
    lb = lb + _compound_jump_sums(rng, params.lambda_b * dt, params.u_b,
                                  params.eta1_b, params.eta2_b, n)
    if size is None:
        return AnnualReturnPair(float(ls[0]), float(lb[0]))
    return AnnualReturnPair(ls, lb)


def mean_log_return(params: ModelParams, which: str, in_debt: bool = False) -> float:
    """Closed-form mean of the one-year log return (drift plus jump mean)."""
    if which == "s":
        u, e1, e2, lam = params.stock_jumps
        return stock_log_drift(params) + lam * jump_log_mean(u, e1, e2)
    u, e1, e2, lam = params.bond_jumps
    return bond_log_drift(params, in_debt=in_debt) + lam * jump_log_mean(u, e1, e2)


def var_log_return(params: ModelParams, which: str, dt: float = 1.0) -> float:
    """Closed-form variance of the one-interval log return."""
    if which == "s":
        sig, (u, e1, e2, lam) = params.sigma_s, params.stock_jumps
    else:
        sig, (u, e1, e2, lam) = params.sigma_b, params.bond_jumps
    second_moment = 2.0 * (u / e1 ** 2 + (1.0 - u) / e2 ** 2)
    return (sig ** 2 + lam * second_moment) * dt
