"""Backward dynamic-programming solver for the auxiliary problem at fixed W*.

Between rebalancing dates the value function satisfies a two-dimensional
PIDE in (s, b) on the solvency branch and a one-dimensional PIDE in debt
b_hat = -b after insolvency.  Because no control acts between dates, the
backward step over an interval is the conditional expectation against the
known log-increment law, i.e. a correlation with the transition kernel.  On
equally spaced log grids this is computed with FFTs: multiply the transform
of the (padded) value surface by exp(Phi * dt), with Phi the closed-form
characteristic exponent.  The grid is extended on each side before the
transform - linearly in wealth above, constant below - so that the circular
wrap-around only touches extension nodes; the residual kernel mass beyond
the extension is measured and reported.

At each rebalancing date the (q, p) optimization splits into two sequential
one-dimensional exhaustive searches over discretized candidates:

    Vt(w)     = max_p V(w*p, w*(1-p), t+)            post-withdrawal wealth w
    V(s,b,t-) = max_q [ q + Vt(w_minus - q) ]        w_minus after gains/fees

with ties broken toward the smallest candidate.  Withdrawals that push
wealth below zero continue on the debt branch with p = 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .market import (ModelParams, characteristic_exponent,
                     debt_characteristic_exponent, stock_log_drift,
                     bond_log_drift)
from .mortality import TontineSchedule, wealth_before_withdrawal
from .policy import ControlPolicy
from .scenario import Scenario


class LocalizationWarning(UserWarning):
    """Transition-kernel mass beyond the padded domain exceeds tolerance."""


# candidates whose value ties the running best within this relative noise
# floor lose to the smaller control (deterministic bang-bang tie-breaking)
TIE_TOL = 1e-11


# ---------------------------------------------------------------------------
# grids and interpolation


@dataclass
class SolverGrid:
    """Log-spaced grids: 2-D solvency branch, 1-D debt branch, 1-D wealth tables."""

    n_s: int = 1024
    n_b: int = 1024
    n_d: int = 0            # defaults to n_b
    n_w: int = 0            # defaults to 2 * max(n_s, n_b)
    s_min: float = 1e-2
    s_max: float = 1e5
    b_min: float = 1e-2
    b_max: float = 1e5
    d_min: float = 1e-2
    d_max: float = 1e5

    def __post_init__(self):
        if self.n_d <= 0:
            self.n_d = self.n_b
        if self.n_w <= 0:
            self.n_w = 2 * max(self.n_s, self.n_b)
        for n in (self.n_s, self.n_b, self.n_d, self.n_w):
            if n < 4:
                raise ValueError("grids need at least 4 nodes")
        for lo, hi in ((self.s_min, self.s_max), (self.b_min, self.b_max),
                       (self.d_min, self.d_max)):
            if not 0.0 < lo < hi:
                raise ValueError("grid bounds must be positive and ordered")
        self.xs = np.linspace(math.log(self.s_min), math.log(self.s_max), self.n_s)
        self.yb = np.linspace(math.log(self.b_min), math.log(self.b_max), self.n_b)
        self.zd = np.linspace(math.log(self.d_min), math.log(self.d_max), self.n_d)
        self.w_min = min(self.s_min, self.b_min)
        self.w_max = 1.3 * (self.s_max + self.b_max)
        self.xw = np.linspace(math.log(self.w_min), math.log(self.w_max), self.n_w)
        self.s_levels = np.exp(self.xs)
        self.b_levels = np.exp(self.yb)
        self.d_levels = np.exp(self.zd)
        self.w_levels = np.exp(self.xw)
        self.dx = self.xs[1] - self.xs[0]
        self.dy = self.yb[1] - self.yb[0]
        self.dz = self.zd[1] - self.zd[0]
        self.dw = self.xw[1] - self.xw[0]
        # total wealth at the 2-D nodes, computed once
        self.total_levels = self.s_levels[:, None] + self.b_levels[None, :]

    @classmethod
    def square(cls, n: int, **kw) -> "SolverGrid":
        return cls(n_s=n, n_b=n, **kw)


def interp_grid(lo: float, step: float, table: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation on a uniform grid, clamped at both ends."""
    idx = (np.asarray(x, dtype=float) - lo) / step
    np.clip(idx, 0.0, table.shape[-1] - 1.0, out=idx)
    i0 = idx.astype(np.int64)
    np.minimum(i0, table.shape[-1] - 2, out=i0)
    t = idx - i0
    return table[..., i0] * (1.0 - t) + table[..., i0 + 1] * t


def interp_grid2(grid: SolverGrid, v2: np.ndarray, xq: np.ndarray, yq: np.ndarray):
    """Bilinear interpolation of v2 on the (log s, log b) grid, clamped."""
    ix = (xq - grid.xs[0]) / grid.dx
    np.clip(ix, 0.0, grid.n_s - 1.0, out=ix)
    i0 = np.minimum(ix.astype(np.int64), grid.n_s - 2)
    tx = ix - i0
    iy = (yq - grid.yb[0]) / grid.dy
    np.clip(iy, 0.0, grid.n_b - 1.0, out=iy)
    j0 = np.minimum(iy.astype(np.int64), grid.n_b - 2)
    ty = iy - j0
    v00 = v2[i0, j0]
    v01 = v2[i0, j0 + 1]
    v10 = v2[i0 + 1, j0]
    v11 = v2[i0 + 1, j0 + 1]
    return ((1 - tx) * ((1 - ty) * v00 + ty * v01)
            + tx * ((1 - ty) * v10 + ty * v11))


# ---------------------------------------------------------------------------
# value surfaces and terminal condition


@dataclass
class ValueSurface:
    """Discretized auxiliary value function for one W* candidate."""

    grid: SolverGrid
    v2: np.ndarray          # (n_s, n_b) solvency branch
    vd: np.ndarray          # (n_d,) debt branch, indexed by debt level
    wstar: float
    time_index: int

    def copy(self) -> "ValueSurface":
        return ValueSurface(self.grid, self.v2.copy(), self.vd.copy(),
                            self.wstar, self.time_index)


def terminal_value(w, wstar: float, kappa: float, alpha: float, epsilon: float):
    """kappa*(W* + min(w - W*, 0)/alpha) + epsilon*w, with kappa=inf meaning
    the shortfall term enters with unit weight and no withdrawal reward."""
    k = 1.0 if math.isinf(kappa) else kappa
    w = np.asarray(w, dtype=float)
    return k * (wstar + np.minimum(w - wstar, 0.0) / alpha) + epsilon * w


def terminal_condition(grid: SolverGrid, wstar: float, kappa: float,
                       alpha: float, epsilon: float) -> ValueSurface:
    """Value surface the instant after the final liquidation."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    v2 = terminal_value(grid.total_levels, wstar, kappa, alpha, epsilon)
    vd = terminal_value(-grid.d_levels, wstar, kappa, alpha, epsilon)
    return ValueSurface(grid, v2, vd, wstar, time_index=-1)


# ---------------------------------------------------------------------------
# Fourier advancement between rebalancing dates


def _pad_extent(drift: float, sigma: float, lam: float, eta_min: float,
                dt: float, tol: float) -> float:
    """Half-width in log space holding all but ~tol of the kernel mass."""
    width = abs(drift) * dt + 8.0 * sigma * math.sqrt(dt)
    lam_dt = lam * dt
    if lam_dt > 0.0 and eta_min > 0.0:
        width += max(0.0, math.log(max(lam_dt, 1.0) / tol)) / eta_min
    return width


def _fine_positions(n: int, h: float) -> np.ndarray:
    """Signed sample positions of an n-point circular grid with spacing h."""
    k = np.arange(n)
    k[k > n // 2] -= n
    return k * h


def _split_to_steps(weights: np.ndarray, positions: np.ndarray, step: float,
                    axis: int):
    """Project kernel mass onto integer multiples of `step` with hat functions.

    Linear mass splitting between the two bracketing offsets preserves the
    total mass and the first moment exactly; the second moment gains at most
    step^2/4, which is the same order as the value interpolation error.
    """
    t = positions / step
    j0 = np.floor(t).astype(np.int64)
    frac = t - j0
    j_min = int(j0.min())
    j_max = int(j0.max()) + 1
    out_shape = list(weights.shape)
    out_shape[axis] = j_max - j_min + 1
    out = np.zeros(out_shape)
    w = np.moveaxis(weights, axis, 0)
    o = np.moveaxis(out, axis, 0)
    np.add.at(o, j0 - j_min, (w.T * (1.0 - frac)).T)
    np.add.at(o, j0 - j_min + 1, (w.T * frac).T)
    offsets = np.arange(j_min, j_max + 1)
    return out, offsets


def _extend_axis(arr: np.ndarray, axis: int, pad_lo: int, pad_hi: int,
                 levels: np.ndarray, step: float) -> np.ndarray:
    """Pad one (log-spaced) axis: linear in wealth above, constant below."""
    arr = np.moveaxis(arr, axis, -1)
    shape = arr.shape[:-1] + (pad_lo + arr.shape[-1] + pad_hi,)
    out = np.empty(shape, dtype=arr.dtype)
    out[..., pad_lo:pad_lo + arr.shape[-1]] = arr
    out[..., :pad_lo] = arr[..., :1]
    top = levels[-1]
    slope = (arr[..., -1] - arr[..., -2]) / (levels[-1] - levels[-2])
    hi_levels = top * np.exp(step * np.arange(1, pad_hi + 1))
    out[..., pad_lo + arr.shape[-1]:] = (arr[..., -1:]
                                         + slope[..., None] * (hi_levels - top))
    return np.moveaxis(out, -1, axis)


class FourierStepper:
    """Precomputed transition kernels and FFT plans for one (grid, params, dt).

    The discrete kernel is built once per instance: the exact increment
    density is recovered on a fine auxiliary grid (inverse FFT of the
    characteristic function, with the fine spacing chosen so the Gaussian
    factor decays below 1e-10 by the Nyquist frequency) and its mass is
    hat-projected onto coarse-grid offsets.  The result is nonnegative,
    locally supported, and preserves total mass and the log-space mean
    exactly, so the backward step is a monotone second-order scheme free of
    spectral ringing even when the bond kernel is narrower than the grid.
    """

    def __init__(self, grid: SolverGrid, params: ModelParams, dt: float,
                 tail_tol: float = 1e-8, warn: bool = True):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.tail_tol = tail_tol
        sq = math.sqrt(dt)

        k_s = _pad_extent(stock_log_drift(params), params.sigma_s,
                          params.lambda_s, min(params.eta1_s, params.eta2_s),
                          dt, tail_tol)
        k_b = _pad_extent(bond_log_drift(params, in_debt=True), params.sigma_b,
                          params.lambda_b, min(params.eta1_b, params.eta2_b),
                          dt, tail_tol)
        # fine spacing: Gaussian charfunc factor below ~1e-10 at pi/h
        h_s = min(grid.dx, 0.462 * params.sigma_s * sq)
        h_b = min(grid.dy, 0.462 * params.sigma_b * sq) if params.sigma_b > 0 \
            else grid.dy
        h_d = min(grid.dz, h_b)

        losses = []
        # joint 2-D kernel on the solvency branch
        nsf = sfft.next_fast_len(max(16, int(math.ceil(2.0 * k_s / h_s))))
        nbf = sfft.next_fast_len(max(16, int(math.ceil(2.0 * k_b / h_b))))
        pos_s = _fine_positions(nsf, h_s)
        pos_b = _fine_positions(nbf, h_b)
        ws = 2.0 * np.pi * sfft.fftfreq(nsf, d=h_s)
        wb = 2.0 * np.pi * sfft.fftfreq(nbf, d=h_b)
        # ifft of conj(charfunc) samples the density at +positions
        fine2 = np.real(sfft.ifft2(np.conj(np.exp(dt * characteristic_exponent(
            params, ws[:, None], wb[None, :])))))
        k2, off_s = _split_to_steps(fine2, pos_s, grid.dx, axis=0)
        k2, off_b = _split_to_steps(k2, pos_b, grid.dy, axis=1)
        losses.append(abs(1.0 - float(k2.sum())) + float(-np.minimum(k2, 0.0).sum()))
        np.clip(k2, 0.0, None, out=k2)
        k2 /= k2.sum()

        # 1-D debt-branch kernel (bond dynamics plus the borrowing spread)
        ndf = sfft.next_fast_len(max(16, int(math.ceil(2.0 * k_b / h_d))))
        pos_d = _fine_positions(ndf, h_d)
        wd = 2.0 * np.pi * sfft.fftfreq(ndf, d=h_d)
        fined = np.real(sfft.ifft(np.conj(np.exp(
            dt * debt_characteristic_exponent(params, wd)))))
        kd, off_d = _split_to_steps(fined, pos_d, grid.dz, axis=0)
        losses.append(abs(1.0 - float(kd.sum())) + float(-np.minimum(kd, 0.0).sum()))
        np.clip(kd, 0.0, None, out=kd)
        kd /= kd.sum()

        self.pad_s = int(max(-off_s.min(), off_s.max())) + 1
        self.pad_b = int(max(-off_b.min(), off_b.max())) + 1
        self.pad_d = int(max(-off_d.min(), off_d.max())) + 1
        self.ns_pad = sfft.next_fast_len(grid.n_s + 2 * self.pad_s, real=True)
        self.nb_pad = sfft.next_fast_len(grid.n_b + 2 * self.pad_b, real=True)
        self.nd_pad = sfft.next_fast_len(grid.n_d + 2 * self.pad_d, real=True)

        emb2 = np.zeros((self.ns_pad, self.nb_pad))
        emb2[np.ix_(off_s % self.ns_pad, off_b % self.nb_pad)] = k2
        self.mult2 = np.conj(sfft.rfft2(emb2))
        embd = np.zeros(self.nd_pad)
        embd[off_d % self.nd_pad] = kd
        self.multd = np.conj(sfft.rfft(embd))

        self.wrap_mass = max(losses)
        if warn and self.wrap_mass > tail_tol:
            warnings.warn(
                f"transition-kernel mass {self.wrap_mass:.3e} lost beyond the "
                f"extension zone (tolerance {tail_tol:.1e}); enlarge the grid",
                LocalizationWarning)

    def advance2(self, v2: np.ndarray) -> np.ndarray:
        """One-interval expectation step on the solvency branch.

        Accepts (..., n_s, n_b); leading axes are advanced as a batch.
        """
        g = self.grid
        ext = _extend_axis(v2, -2, self.pad_s, self.ns_pad - g.n_s - self.pad_s,
                           g.s_levels, g.dx)
        ext = _extend_axis(ext, -1, self.pad_b, self.nb_pad - g.n_b - self.pad_b,
                           g.b_levels, g.dy)
        spec = sfft.rfft2(ext, axes=(-2, -1))
        spec *= self.mult2
        out = sfft.irfft2(spec, s=(self.ns_pad, self.nb_pad), axes=(-2, -1))
        return out[..., self.pad_s:self.pad_s + g.n_s,
                   self.pad_b:self.pad_b + g.n_b]

    def advanced(self, vd: np.ndarray) -> np.ndarray:
        """One-interval expectation step on the debt branch (drift plus spread)."""
        g = self.grid
        ext = _extend_axis(vd, -1, self.pad_d, self.nd_pad - g.n_d - self.pad_d,
                           g.d_levels, g.dz)
        spec = sfft.rfft(ext, axis=-1)
        spec *= self.multd
        out = sfft.irfft(spec, n=self.nd_pad, axis=-1)
        return out[..., self.pad_d:self.pad_d + g.n_d]


def advance_interval(surface: ValueSurface, dt: float,
                     params: ModelParams) -> ValueSurface:
    """Advance both branches one interval earlier (no controls in between)."""
    stepper = FourierStepper(surface.grid, params, dt)
    return ValueSurface(surface.grid, stepper.advance2(surface.v2),
                        stepper.advanced(surface.vd), surface.wstar,
                        surface.time_index)


# ---------------------------------------------------------------------------
# rebalancing-date optimization


def admissible_withdrawals(w_minus, q_min: float, q_max: float,
                           is_terminal: bool = False):
    """Admissible withdrawal interval (lo, hi) given pre-withdrawal wealth."""
    if q_min > q_max:
        raise ValueError("q_min must not exceed q_max")
    if is_terminal:
        z = np.zeros_like(np.asarray(w_minus, dtype=float))
        return (z if z.ndim else 0.0), (z if z.ndim else 0.0)
    w = np.asarray(w_minus, dtype=float)
    hi = np.where(w >= q_max, q_max, np.maximum(q_min, w))
    lo = np.full_like(hi, q_min)
    if hi.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def _read_continuation(grid: SolverGrid, vt: np.ndarray, vd: np.ndarray,
                       w_plus: np.ndarray) -> np.ndarray:
    """Continuation value at post-withdrawal wealth; w <= 0 reads the debt branch."""
    logw = np.log(np.maximum(w_plus, grid.w_min))
    out = interp_grid(grid.xw[0], grid.dw, vt, logw)
    neg = w_plus <= 0.0
    if np.any(neg):
        logd = np.log(np.maximum(-w_plus[neg], grid.d_min))
        out[neg] = interp_grid(grid.zd[0], grid.dz, vd, logd)
    return out


def _build_vtilde(grid: SolverGrid, v2: np.ndarray, p_cands: np.ndarray):
    """Table of max_p V(w*p, w*(1-p)) over the wealth knots, plus the argmax.

    Returns (vt, p_slice, coords) where coords are the chosen (log s, log b)
    lookup points, reused to evaluate auxiliary surfaces under the same policy.
    """
    w = grid.w_levels[None, :]
    p = p_cands[:, None]
    sx = np.log(np.clip(w * p, grid.s_min, grid.s_max))
    by = np.log(np.clip(w * (1.0 - p), grid.b_min, grid.b_max))
    vals = interp_grid2(grid, v2, sx, by)
    vt = np.max(vals, axis=0)
    # smallest p whose value ties the max within float noise
    tol = TIE_TOL * (1.0 + np.abs(vt))
    sel = np.argmax(vals >= vt - tol, axis=0)
    cols = np.arange(grid.n_w)
    vt = vals[sel, cols]
    return vt, p_cands[sel], (sx[sel, cols], by[sel, cols])


def _search_withdrawal(grid: SolverGrid, vt: np.ndarray, vd: np.ndarray,
                       w_minus: np.ndarray, q_cands: np.ndarray,
                       q_min: float, q_max: float, reward: bool):
    """Exhaustive withdrawal search at each node's exact pre-withdrawal wealth."""
    hi = np.where(w_minus >= q_max, q_max, np.maximum(q_min, w_minus))
    best = best_q = None
    for c in q_cands:                       # ascending: ties keep smallest q
        qc = np.minimum(c, hi)
        val = _read_continuation(grid, vt, vd, w_minus - qc)
        if reward:
            val += qc
        if best is None:
            best, best_q = val, qc
            continue
        better = val > best + TIE_TOL * (1.0 + np.abs(best))
        best = np.where(better, val, best)
        best_q = np.where(better, qc, best_q)
    return best, best_q


@dataclass
class DateStepTables:
    """Per-date artifacts of the two sequential searches."""

    vt: np.ndarray
    p_slice: np.ndarray
    q_slice: np.ndarray
    p_coords: tuple


def rebalance_optimize(surface: ValueSurface, gain: float, dt_i: float,
                       fee: float, q_min: float, q_max: float,
                       n_q: int = 41, n_p: int = 101, *,
                       kappa_infinite: bool = False):
    """Apply one rebalancing date to an advanced surface.

    Returns (surface at t_i^-, q policy slice, p policy slice); the policy
    slices are keyed by the wealth knots of the grid's 1-D tables.
    """
    grid = surface.grid
    q_cands = np.linspace(q_min, q_max, n_q)
    p_cands = np.linspace(0.0, 1.0, n_p)
    reward = not kappa_infinite

    vt, p_slice, p_coords = _build_vtilde(grid, surface.v2, p_cands)
    w_minus = wealth_before_withdrawal(grid.s_levels[:, None],
                                       grid.b_levels[None, :], gain, dt_i, fee)
    v2_new, _ = _search_withdrawal(grid, vt, surface.vd, w_minus,
                                   q_cands, q_min, q_max, reward)
    # debt branch: withdrawal forced to q_min, p = 0, stays in debt
    wm_d = wealth_before_withdrawal(-grid.d_levels, 0.0, gain, dt_i, fee)
    w_plus_d = wm_d - q_min
    vd_new = _read_continuation(grid, vt, surface.vd, w_plus_d)
    if reward:
        vd_new += q_min
    # policy tables on the wealth knots
    _, q_slice = _search_withdrawal(grid, vt, surface.vd, grid.w_levels,
                                    q_cands, q_min, q_max, reward)
    out = ValueSurface(grid, v2_new, vd_new, surface.wstar, surface.time_index)
    return out, DateStepTables(vt, p_slice, q_slice, p_coords)


# ---------------------------------------------------------------------------
# full backward solve


@dataclass
class SolveResult:
    value: float
    wstar: float
    kappa: float
    policy: ControlPolicy | None
    ew_per_year: float | None = None
    es: float | None = None
    expected_wt: float | None = None
    wrap_mass: float = 0.0
    grid_shape: tuple = ()


def solve_policy(scenario: Scenario, params: ModelParams, wstar: float,
                 grid: SolverGrid | None = None, *, kappa: float | None = None,
                 n_q: int = 41, n_p: int = 101, compute_stats: bool = False,
                 collect_policy: bool = True, stepper: FourierStepper | None = None,
                 fingerprint: str = "") -> SolveResult:
    """Backward sweep over all rebalancing dates for one W* candidate.

    Returns the value read at the initial state (s = 0, b = W0, t_0^-); with
    compute_stats the expected withdrawals, the shortfall functional at W*
    and E[W_T] are carried through the same sweep under the stored control.
    """
    if grid is None:
        grid = SolverGrid()
    if kappa is None:
        kappa = scenario.kappa
    kinf = math.isinf(kappa)
    sched = scenario.schedule()
    if stepper is None:
        stepper = FourierStepper(grid, params, scenario.dt)
    m = scenario.m
    q_cands = np.linspace(scenario.q_min, scenario.q_max, n_q)
    p_cands = np.linspace(0.0, 1.0, n_p)

    # terminal liquidation: value depends on total wealth after final gain/fee
    gf = (1.0 + sched.gains[m]) * math.exp(-sched.dts[m] * sched.fee)
    v2 = terminal_value(grid.total_levels * gf, wstar, kappa, scenario.alpha,
                        scenario.epsilon)
    vd = terminal_value(-grid.d_levels * gf, wstar, kappa, scenario.alpha,
                        scenario.epsilon)
    if compute_stats:
        u1_2 = np.zeros_like(v2);  u1_d = np.zeros_like(vd)
        u2_2 = wstar + np.minimum(grid.total_levels * gf - wstar, 0.0) / scenario.alpha
        u2_d = wstar + np.minimum(-grid.d_levels * gf - wstar, 0.0) / scenario.alpha
        u3_2 = grid.total_levels * gf
        u3_d = -grid.d_levels * gf

    q_rows = np.zeros((m + 1, grid.n_w))
    p_rows = np.zeros((m + 1, grid.n_w))
    value0 = ew0 = es0 = ewt0 = None

    for i in range(m - 1, -1, -1):
        if compute_stats:
            stack2 = stepper.advance2(np.stack([v2, u1_2, u2_2, u3_2]))
            stackd = stepper.advanced(np.stack([vd, u1_d, u2_d, u3_d]))
            v2, u1_2, u2_2, u3_2 = stack2
            vd, u1_d, u2_d, u3_d = stackd
        else:
            v2 = stepper.advance2(v2)
            vd = stepper.advanced(vd)

        gain, dt_i = sched.gains[i], sched.dts[i]
        vt, p_slice, p_coords = _build_vtilde(grid, v2, p_cands)
        w_minus = wealth_before_withdrawal(grid.s_levels[:, None],
                                           grid.b_levels[None, :],
                                           gain, dt_i, sched.fee)
        v2_new, q_sel = _search_withdrawal(grid, vt, vd, w_minus, q_cands,
                                           scenario.q_min, scenario.q_max,
                                           not kinf)
        wm_d = wealth_before_withdrawal(-grid.d_levels, 0.0, gain, dt_i, sched.fee)
        wp_d = wm_d - scenario.q_min
        vd_new = _read_continuation(grid, vt, vd, wp_d)
        if not kinf:
            vd_new += scenario.q_min

        if collect_policy:
            _, q_rows[i] = _search_withdrawal(grid, vt, vd, grid.w_levels,
                                              q_cands, scenario.q_min,
                                              scenario.q_max, not kinf)
            p_rows[i] = p_slice

        if i == 0:
            # inception: no gain, no fee accrual, exact scalar readout at W0
            w0 = np.array([scenario.w0])
            val0_arr, q0_arr = _search_withdrawal(grid, vt, vd, w0, q_cands,
                                                  scenario.q_min,
                                                  scenario.q_max, not kinf)
            value0, q0 = float(val0_arr[0]), float(q0_arr[0])

        if compute_stats:
            # evaluate the auxiliaries under the exact argmax of the value sweep
            w_plus = w_minus - q_sel
            u_new, u_zero = [], []
            for u2d, ud, add_q in ((u1_2, u1_d, True), (u2_2, u2_d, False),
                                   (u3_2, u3_d, False)):
                ut = interp_grid2(grid, u2d, *p_coords)
                un2 = _read_continuation(grid, ut, ud, w_plus)
                und = _read_continuation(grid, ut, ud, wp_d)
                if add_q:
                    un2 = un2 + q_sel
                    und = und + scenario.q_min
                u_new.append((un2, und))
                if i == 0:
                    u0 = float(_read_continuation(
                        grid, ut, ud, np.array([scenario.w0 - q0]))[0])
                    u_zero.append(u0 + (q0 if add_q else 0.0))
            (u1_2, u1_d), (u2_2, u2_d), (u3_2, u3_d) = u_new
            if i == 0:
                ew0, es0, ewt0 = u_zero

        v2, vd = v2_new, vd_new

    policy = None
    if collect_policy:
        policy = ControlPolicy(
            w_knots=grid.w_levels.copy(), q=q_rows, p=p_rows,
            wstar=float(wstar), kappa=float(kappa),
            gains=sched.gains.copy(), dts=sched.dts.copy(), fee=sched.fee,
            q_min=scenario.q_min, q_max=scenario.q_max,
            fingerprint=fingerprint)
    return SolveResult(
        value=value0, wstar=float(wstar), kappa=float(kappa), policy=policy,
        ew_per_year=None if ew0 is None else ew0 / scenario.horizon,
        es=es0, expected_wt=ewt0, wrap_mass=stepper.wrap_mass,
        grid_shape=(grid.n_s, grid.n_b))
