import math

import numpy as np
import pytest

from tontine_overlay.market import ModelParams, sample_interval, stream_rng
from tontine_overlay.scenario import Scenario
from tontine_overlay.solver import (
    FourierStepper, SolverGrid, ValueSurface, admissible_withdrawals,
    advance_interval, interp_grid, interp_grid2, rebalance_optimize,
    solve_policy, terminal_condition, terminal_value, _build_vtilde,
    _read_continuation, _search_withdrawal)

PARAMS = ModelParams.default()


@pytest.fixture(scope="module")
def grid256():
    return SolverGrid.square(256)


@pytest.fixture(scope="module")
def stepper256(grid256):
    return FourierStepper(grid256, PARAMS, 1.0)


class TestGrid:
    def test_log_spacing(self, grid256):
        assert np.allclose(np.diff(grid256.xs), grid256.dx)
        assert grid256.s_levels[0] == pytest.approx(1e-2)
        assert grid256.s_levels[-1] == pytest.approx(1e5)

    def test_defaults(self):
        g = SolverGrid(n_s=64, n_b=32)
        assert g.n_d == 32
        assert g.n_w == 128

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            SolverGrid(n_s=2, n_b=8)

    def test_interp_clamps(self):
        table = np.array([1.0, 2.0, 4.0])
        got = interp_grid(0.0, 1.0, table, np.array([-5.0, 0.5, 10.0]))
        assert got.tolist() == [1.0, 1.5, 4.0]


class TestTerminal:
    def test_at_wstar_kink(self, grid256):
        assert terminal_value(585.0, 585.0, 1.0, 0.05, 0.0) == 585.0

    def test_ruin_penalty(self):
        # s+b = 0, W* = 100, kappa = 1, alpha = 0.05
        assert terminal_value(0.0, 100.0, 1.0, 0.05, 0.0) == -1900.0

    def test_debt_node_clamp(self):
        # b_hat = 50 against W* = -100: min clamps to zero
        assert terminal_value(-50.0, -100.0, 1.0, 0.05, 0.0) == -100.0

    def test_surface_shapes(self, grid256):
        surf = terminal_condition(grid256, 500.0, 0.185, 0.05, -1e-4)
        assert surf.v2.shape == (256, 256)
        assert surf.vd.shape == (256,)
        w = grid256.total_levels
        want = 0.185 * (500.0 + np.minimum(w - 500.0, 0.0) / 0.05) - 1e-4 * w
        assert np.allclose(surf.v2, want, rtol=1e-14)

    def test_rejects_bad_alpha(self, grid256):
        with pytest.raises(ValueError):
            terminal_condition(grid256, 500.0, 0.185, 1.5, 0.0)


class TestAdvance:
    def test_preserves_constants(self, grid256, stepper256):
        out = stepper256.advance2(np.full((256, 256), 5.25))
        assert np.abs(out - 5.25).max() < 1e-10
        outd = stepper256.advanced(np.full(256, -3.5))
        assert np.abs(outd + 3.5).max() < 1e-10

    def test_linearity(self, grid256, stepper256):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((256, 256))
        b = rng.standard_normal((256, 256))
        lhs = stepper256.advance2(2.5 * a - 1.25 * b)
        rhs = 2.5 * stepper256.advance2(a) - 1.25 * stepper256.advance2(b)
        assert np.abs(lhs - rhs).max() < 1e-10 * np.abs(rhs).max()

    def test_batch_axis(self, stepper256):
        rng = np.random.default_rng(1)
        stack = rng.standard_normal((3, 256, 256))
        batched = stepper256.advance2(stack)
        for k in range(3):
            assert np.allclose(batched[k], stepper256.advance2(stack[k]),
                               rtol=1e-12, atol=1e-12)

    def test_wrap_mass_small(self, stepper256):
        assert stepper256.wrap_mass < 1e-8

    @pytest.mark.slow
    def test_linear_payoff_mean_identity(self):
        # E[s e^dx + b e^dy] = s exp(mu_s dt) + b exp(mu_b dt), jump-free
        p = ModelParams(mu_s=0.08912, sigma_s=0.1460, lambda_s=0.0, u_s=0.5,
                        eta1_s=4.0, eta2_s=5.0, mu_b=0.0046, sigma_b=0.0130,
                        lambda_b=0.0, u_b=0.5, eta1_b=60.0, eta2_b=60.0,
                        rho_sb=0.08420, mu_c_b=0.02)
        g = SolverGrid.square(2048)
        st = FourierStepper(g, p, 1.0)
        lin = g.s_levels[:, None] + g.b_levels[None, :]
        out = st.advance2(lin)
        want = g.s_levels[:, None] * math.exp(p.mu_s) \
            + g.b_levels[None, :] * math.exp(p.mu_b)
        # interior: at least one kernel width away from every boundary
        ms = int(np.ceil(5.5 / g.dx))
        mb = int(np.ceil(0.7 / g.dy))
        rel = np.abs(out / want - 1.0)[ms:-ms, mb:-mb]
        assert rel.max() < 1e-5
        outd = st.advanced(g.d_levels.copy())
        wantd = g.d_levels * math.exp(p.mu_b + p.mu_c_b)
        md = int(np.ceil(0.7 / g.dz))
        assert np.abs(outd / wantd - 1.0)[md:-md].max() < 1e-5

    @pytest.mark.slow
    def test_against_monte_carlo_oracle(self, grid256, stepper256):
        # smooth payoff advanced on the grid vs a path-sampled expectation
        def payoff(s, b):
            return np.tanh((np.log(s + b) - 6.0) / 0.75)

        g = grid256
        vin = payoff(g.s_levels[:, None], g.b_levels[None, :])
        out = stepper256.advance2(vin)
        n = 400_000
        pair = sample_interval(PARAMS, 1.0, stream_rng(2024, 0), size=n)
        for i, j in ((150, 170), (170, 150), (160, 160)):
            s0, b0 = g.s_levels[i], g.b_levels[j]
            samples = payoff(s0 * np.exp(pair.log_return_s),
                             b0 * np.exp(pair.log_return_b))
            se = samples.std() / math.sqrt(n)
            assert abs(out[i, j] - samples.mean()) < 3.0 * se

    def test_advance_interval_wrapper(self, grid256):
        surf = terminal_condition(grid256, 500.0, 0.185, 0.05, -1e-4)
        out = advance_interval(surf, 1.0, PARAMS)
        assert isinstance(out, ValueSurface)
        assert out.v2.shape == surf.v2.shape
        assert np.isfinite(out.v2).all() and np.isfinite(out.vd).all()


class TestAdmissibleWithdrawals:
    def test_full_interval(self):
        assert admissible_withdrawals(1000.0, 40.0, 80.0) == (40.0, 80.0)

    def test_clamped_upper(self):
        assert admissible_withdrawals(60.0, 40.0, 80.0) == (40.0, 60.0)

    def test_forced_minimum(self):
        assert admissible_withdrawals(10.0, 40.0, 80.0) == (40.0, 40.0)

    def test_terminal(self):
        assert admissible_withdrawals(1000.0, 40.0, 80.0, is_terminal=True) \
            == (0.0, 0.0)

    def test_vectorized(self):
        lo, hi = admissible_withdrawals(np.array([10.0, 60.0, 1000.0]), 40.0, 80.0)
        assert hi.tolist() == [40.0, 60.0, 80.0]
        assert lo.tolist() == [40.0, 40.0, 40.0]

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            admissible_withdrawals(10.0, 80.0, 40.0)


class TestRebalanceOptimize:
    def test_zero_continuation_withdraws_max(self, grid256):
        surf = ValueSurface(grid256, np.zeros((256, 256)), np.zeros(256),
                            wstar=0.0, time_index=5)
        out, tables = rebalance_optimize(surf, gain=0.0, dt_i=1.0, fee=0.0,
                                         q_min=40.0, q_max=80.0)
        rich = grid256.total_levels >= 80.0
        assert np.allclose(out.v2[rich], 80.0)
        knots_rich = grid256.w_levels >= 80.0
        assert np.allclose(tables.q_slice[knots_rich], 80.0)

    def test_exhaustive_search_matches_brute_force(self, grid256):
        rng = np.random.default_rng(3)
        vt = np.cumsum(rng.random(grid256.n_w))          # increasing table
        vd = -np.cumsum(rng.random(grid256.n_d)) - 5.0
        w_minus = np.array([10.0, 55.0, 79.9, 80.0, 643.7, 1e5])
        q_cands = np.linspace(40.0, 80.0, 5)
        best, best_q = _search_withdrawal(grid256, vt, vd, w_minus, q_cands,
                                          40.0, 80.0, reward=True)
        for k, w in enumerate(w_minus):
            upper = 80.0 if w >= 80.0 else max(40.0, w)
            cands = np.minimum(q_cands, upper)
            vals = []
            for q in cands:
                wp = w - q
                if wp > 0:
                    cont = interp_grid(grid256.xw[0], grid256.dw, vt,
                                       np.array([math.log(max(wp, grid256.w_min))]))[0]
                else:
                    cont = interp_grid(grid256.zd[0], grid256.dz, vd,
                                       np.array([math.log(max(-wp, grid256.d_min))]))[0]
                vals.append(q + cont)
            vals = np.array(vals)
            assert best[k] == pytest.approx(vals.max(), rel=1e-12)
            assert best_q[k] == pytest.approx(cands[np.argmax(vals)], rel=1e-12)

    def test_tie_breaks_to_smallest_q(self, grid256):
        # reward-free search with a flat continuation: every q ties
        vt = np.full(grid256.n_w, 2.0)
        vd = np.full(grid256.n_d, 2.0)
        best, best_q = _search_withdrawal(
            grid256, vt, vd, np.array([500.0]), np.linspace(40.0, 80.0, 5),
            40.0, 80.0, reward=False)
        assert best_q[0] == 40.0
        assert best[0] == 2.0

    def test_tie_breaks_to_smallest_p(self, grid256):
        vt, p_slice, _ = _build_vtilde(grid256, np.full((256, 256), 1.5),
                                       np.linspace(0.0, 1.0, 11))
        assert np.all(p_slice == 0.0)
        assert np.allclose(vt, 1.5)

    def test_p_search_matches_brute_force(self, grid256):
        rng = np.random.default_rng(7)
        v2 = np.add.outer(np.sin(grid256.xs), np.cos(grid256.yb)) \
            + 0.1 * rng.random((256, 256))
        p_cands = np.linspace(0.0, 1.0, 7)
        vt, p_slice, _ = _build_vtilde(grid256, v2, p_cands)
        for k in (0, 100, 400, grid256.n_w - 1):
            w = grid256.w_levels[k]
            vals = [interp_grid2(
                grid256, v2,
                np.array([math.log(min(max(w * p, grid256.s_min), grid256.s_max))]),
                np.array([math.log(min(max(w * (1 - p), grid256.b_min),
                                       grid256.b_max))]))[0]
                for p in p_cands]
            assert vt[k] == pytest.approx(max(vals), rel=1e-12)
            assert p_slice[k] == pytest.approx(p_cands[int(np.argmax(vals))])

    def test_debt_read_dispatch(self, grid256):
        vt = np.zeros(grid256.n_w)
        vd = np.linspace(-1.0, -400.0, grid256.n_d)
        got = _read_continuation(grid256, vt, vd, np.array([-50.0, 25.0]))
        want = interp_grid(grid256.zd[0], grid256.dz, vd,
                           np.array([math.log(50.0)]))[0]
        assert got[0] == pytest.approx(want, rel=1e-12)
        assert got[1] == 0.0


class TestSolvePolicy:
    def test_single_period_degenerate_withdrawal(self):
        toy = Scenario(w0=100.0, horizon=1.0, m=1, q_min=7.0, q_max=7.0,
                       alpha=0.05, kappa=0.0, epsilon=0.0, fee=0.0,
                       tontine_enabled=False)
        res = solve_policy(toy, PARAMS, wstar=0.0,
                           grid=SolverGrid.square(64), compute_stats=True)
        assert res.value == pytest.approx(7.0, abs=1e-12)
        assert res.ew_per_year == pytest.approx(7.0, abs=1e-12)

    def test_value_decomposition_is_exact(self):
        sc = Scenario(w0=1000.0, horizon=5.0, m=5, kappa=0.5,
                      tontine_enabled=False, fee=0.0)
        res = solve_policy(sc, PARAMS, wstar=300.0,
                           grid=SolverGrid.square(128), compute_stats=True)
        recon = res.ew_per_year * sc.horizon + sc.kappa * res.es \
            + sc.epsilon * res.expected_wt
        assert res.value == pytest.approx(recon, rel=1e-11)

    def test_policy_admissibility(self):
        sc = Scenario(w0=1000.0, horizon=5.0, m=5, kappa=0.5)
        res = solve_policy(sc, PARAMS, wstar=300.0,
                           grid=SolverGrid.square(128))
        pol = res.policy
        assert np.all(pol.q[:-1] >= sc.q_min) and np.all(pol.q[:-1] <= sc.q_max)
        assert np.all(pol.q[-1] == 0.0) and np.all(pol.p[-1] == 0.0)
        assert np.all(pol.p >= 0.0) and np.all(pol.p <= 1.0)
        # clamped readback respects the admissible set at low wealth
        q_low = pol.q_at(2, np.array([10.0, 55.0]))
        assert q_low[0] == sc.q_min
        assert sc.q_min <= q_low[1] <= 55.0
        assert pol.p_at(2, np.array([-3.0]))[0] == 0.0

    def test_infinite_kappa_withdraws_minimum(self):
        # epsilon = 0 keeps the value nondecreasing in wealth, so with the
        # reward term dropped every q ties through the flat top and the
        # smallest-q rule pins the minimum
        sc = Scenario(w0=1000.0, horizon=3.0, m=3, kappa=math.inf,
                      epsilon=0.0, tontine_enabled=False, fee=0.0)
        res = solve_policy(sc, PARAMS, wstar=700.0,
                           grid=SolverGrid.square(128), compute_stats=True)
        assert res.ew_per_year == pytest.approx(sc.q_min, abs=1e-9)
        assert np.allclose(res.policy.q[:-1], sc.q_min)

    def test_kappa_zero_withdraws_admissible_maximum(self):
        sc = Scenario(w0=10_000.0, horizon=3.0, m=3, q_min=40.0, q_max=80.0,
                      kappa=0.0, epsilon=0.0, tontine_enabled=False, fee=0.0)
        g = SolverGrid.square(128)
        res = solve_policy(sc, PARAMS, wstar=0.0, grid=g, compute_stats=True)
        pol = res.policy
        upper = np.where(g.w_levels >= 80.0, 80.0,
                         np.maximum(40.0, g.w_levels))
        assert np.allclose(pol.q[0], upper)
        assert res.ew_per_year == pytest.approx(80.0, abs=1e-3)
