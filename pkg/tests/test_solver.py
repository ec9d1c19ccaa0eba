import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import mp_bradford, mp_settling
from swemed.model import SourceMode, conservative
from swemed.params import Parameters
from swemed.solver import (
    FORWARD_EULER,
    N_GHOST,
    AdmissibilityError,
    Boundary,
    Field,
    Grid,
    NewtonDivergence,
    NewtonSettings,
    Splitting,
    cfl_dt,
    diagnostics,
    init_relaxation_scenario,
    lake_at_rest,
    run,
    set_threads_from_env,
    source_step,
    split_step,
    step,
    totals,
    transport_step,
    uniform_field,
)

PERIODIC = Boundary.PERIODIC


def periodic_field(n, h, u, a, c, hb):
    grid = Grid(0.0, 1.0, n, PERIODIC)
    x = grid.centers
    w = np.column_stack([np.broadcast_to(v(x) if callable(v) else v, x.shape) for v in (h, u, a, c, hb)])
    w[:, 1:4] *= w[:, [0]]
    return Field.from_interior(grid, w)


def bump(x, center=0.5, width=0.1):
    return np.exp(-(((x - center) / width) ** 2))


class TestGrid:
    def test_geometry(self):
        g = Grid(-1.0, 2.0, 300)
        assert g.dx == pytest.approx(0.01, rel=1e-15)
        assert g.centers[0] == pytest.approx(-0.995, rel=1e-14)
        assert g.interior == slice(N_GHOST, N_GHOST + 300)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 3), (1.0, 1.0, 10), (1.0, 0.0, 10)])
    def test_rejects_bad_grids(self, args):
        with pytest.raises(ValueError):
            Grid(*args)

    def test_field_shape_checked(self):
        with pytest.raises(ValueError):
            Field(Grid(0, 1, 8), np.zeros((8, 5)))

    def test_open_ghosts_copy_edge_cells(self):
        f = init_relaxation_scenario(30)
        np.testing.assert_array_equal(f.W[0], f.W[N_GHOST])
        np.testing.assert_array_equal(f.W[-1], f.W[-N_GHOST - 1])

    def test_periodic_ghosts_wrap(self):
        f = periodic_field(10, lambda x: 1 + x, 0, 0, 0, 0)
        np.testing.assert_array_equal(f.W[0], f.W[-N_GHOST - 2])
        np.testing.assert_array_equal(f.W[-1], f.W[N_GHOST + 1])


class TestInitialData:
    def test_relaxation_scenario_profile(self):
        f = init_relaxation_scenario(300)
        pr = f.primitives()
        left = f.grid.centers < 0
        assert np.all(pr["h"][left] == 1.5) and np.all(pr["h"][~left] == 1.0)
        np.testing.assert_allclose(pr["u_m"], 0.05, rtol=1e-15)
        np.testing.assert_allclose(pr["alpha_1"], -0.01, rtol=1e-15)
        assert np.all(pr["c_m"][left] == 0.01) and np.all(pr["c_m"][~left] == 0.0)
        assert np.all(pr["h_b"] == 0.0)

    def test_relaxation_scenario_totals(self, p):
        surface, sediment, momentum = totals(init_relaxation_scenario(300), p)
        # 1.5 * 1 + 1.0 * 2, 0.015 * 1, 0.05 * 3.5
        assert surface == pytest.approx(3.5, rel=1e-14)
        assert sediment == pytest.approx(0.015, rel=1e-14)
        assert momentum == pytest.approx(0.175, rel=1e-14)

    def test_centre_on_interface_rejected(self):
        with pytest.raises(ValueError):
            init_relaxation_scenario(3)  # n=3 fails the grid check too
        with pytest.raises(ValueError):
            init_relaxation_scenario(5, -1.0, 1.0)

    def test_diagnostics_probe(self, p):
        d = diagnostics(init_relaxation_scenario(300), p)
        assert abs(d.probe_x) <= 0.005 + 1e-15
        # u(zeta) = u_m + alpha_1 (1 - 2 zeta)
        assert d.probe_profile[0] == pytest.approx(0.04, rel=1e-13)
        assert d.probe_profile[-1] == pytest.approx(0.06, rel=1e-13)
        assert d.eq1_max == pytest.approx(0.06, rel=1e-13)


class TestTimeStep:
    @given(h=st.floats(0.1, 5.0), cfl=st.floats(0.05, 1.0))
    def test_cfl_at_rest(self, h, cfl):
        p = Parameters()
        f = uniform_field(Grid(0, 1, 20, PERIODIC), conservative(h, 0, 0, 0, 0))
        assert cfl_dt(f, p, cfl) == pytest.approx(cfl * 0.05 / math.sqrt(9.81 * h), rel=1e-12)

    @pytest.mark.parametrize("cfl", [0.0, -0.1, 1.5])
    def test_cfl_range(self, p, cfl):
        f = uniform_field(Grid(0, 1, 8), conservative(1, 0, 0, 0, 0))
        with pytest.raises(ValueError):
            cfl_dt(f, p, cfl)

    def test_dry_cell_rejected(self, p):
        f = uniform_field(Grid(0, 1, 8), conservative(1, 0, 0, 0, 0))
        f.W[N_GHOST + 3, 0] = 0.0
        with pytest.raises(AdmissibilityError) as exc:
            cfl_dt(f, p, 0.4)
        assert exc.value.cell == 3


class TestTransport:
    @given(
        h=st.floats(0.1, 3), u=st.floats(-1, 1), a=st.floats(-0.3, 0.3),
        c=st.floats(0, 0.05), hb=st.floats(-1, 1),
    )
    def test_uniform_state_is_exactly_steady(self, h, u, a, c, hb):
        p = Parameters()
        f = uniform_field(Grid(0, 1, 12, PERIODIC), conservative(h, u, a, c, hb))
        g = transport_step(f, p, cfl_dt(f, p, 0.45))
        np.testing.assert_array_equal(g.interior, f.interior)

    def test_lake_at_rest_is_preserved(self, p):
        grid = Grid(0.0, 1.0, 100, PERIODIC)
        f = lake_at_rest(grid, 1.0, lambda x: 0.3 * bump(x))
        w0 = f.interior.copy()
        for _ in range(50):
            f = step(f, p, cfl_dt(f, p, 0.45))
        assert np.max(np.abs(f.interior - w0)) <= 50 * 1e-13

    def test_lake_at_rest_piecewise_linear_bed(self, p):
        grid = Grid(-1.0, 2.0, 300)
        f = lake_at_rest(grid, 1.0, lambda x: np.interp(x, [-1.0, 0.0, 0.5, 1.0, 2.0], [0.0, 0.0, 0.4, 0.1, 0.1]))
        w0 = f.interior.copy()
        for _ in range(1000):
            f = step(f, p, cfl_dt(f, p, 0.45))
        assert np.max(np.abs(f.interior - w0)) <= 1e-12

    def test_lake_at_rest_open_boundaries(self, p):
        grid = Grid(0.0, 1.0, 64)
        f = lake_at_rest(grid, 2.0, lambda x: 0.5 * np.sin(6 * x))
        g = transport_step(f, p, cfl_dt(f, p, 0.45))
        assert np.max(np.abs(g.interior - f.interior)) <= 1e-13

    @given(
        amp=st.floats(0.0, 0.3), u=st.floats(-0.5, 0.5), c=st.floats(0, 0.05),
        bed=st.floats(0.0, 0.2),
    )
    def test_periodic_transport_conserves_mass(self, amp, u, c, bed):
        p = Parameters()
        f = periodic_field(40, lambda x: 1 + amp * bump(x), u, 0.0, lambda x: c * bump(x, 0.3),
                           lambda x: bed * bump(x, 0.7))
        s0, q0, _ = totals(f, p)
        for _ in range(10):
            f = transport_step(f, p, cfl_dt(f, p, 0.45))
        s1, q1, _ = totals(f, p)
        assert abs(s1 - s0) <= 1e-13 * abs(s0)
        assert abs(q1 - q0) <= 1e-13 * max(abs(q0), 1e-3)

    def test_periodic_bump_mean_is_preserved(self, p):
        f = periodic_field(80, 1.0, 0.4, 0.0, lambda x: 0.02 * bump(x), 0.0)
        c0 = f.interior[:, 3].sum()
        for _ in range(40):
            f = transport_step(f, p, cfl_dt(f, p, 0.45))
        assert f.interior[:, 3].sum() == pytest.approx(c0, rel=1e-13)
        # the bump moved right without growing
        assert f.primitives()["c_m"].max() <= 0.02 * (1 + 1e-12)
        assert f.grid.centers[np.argmax(f.interior[:, 3])] > 0.5

    def test_forward_euler_tableau_runs(self, p):
        f = periodic_field(20, lambda x: 1 + 0.1 * bump(x), 0, 0, 0, 0)
        g = transport_step(f, p, 0.1 * cfl_dt(f, p, 0.45), FORWARD_EULER)
        assert totals(g, p)[0] == pytest.approx(totals(f, p)[0], rel=1e-14)


class TestSource:
    def test_moment_relaxation_closed_form(self):
        # no friction and no exchange: h alpha_1 decays linearly, alone
        p = Parameters(epsilon=0.0, omega_0=0.0, nu=10.0)
        h, a, dt = 1.5, 0.2, 1e-3
        newton = NewtonSettings()
        f = uniform_field(Grid(0, 1, 8), conservative(h, 0.0, a, 0.0, 0.0))
        g = source_step(f, p, dt, newton)
        # the implicit Euler residual shrinks errors in this row, so the
        # Newton stopping rule bounds the error directly
        bound = newton.tol * (1 + h)
        np.testing.assert_allclose(g.interior[:, 2], h * a / (1 + 12 * p.nu * dt / h**2), rtol=0, atol=bound)
        np.testing.assert_array_equal(g.interior[:, 0], h)
        np.testing.assert_array_equal(g.interior[:, 1], 0.0)

    def test_deposition_closed_form(self, p):
        # at rest only deposition acts: h' = -D s, (hc)' = -D, h_b' = D s with
        # s = 1/(1-psi) and D = omega_0 S_b hc / h.  Implicit Euler keeps
        # M = h - s hc, which leaves a quadratic for the new hc.
        h0, c0, dt = 1.0, 0.01, 0.05
        newton = NewtonSettings()
        f = uniform_field(Grid(0, 1, 8), conservative(h0, 0.0, 0.0, c0, 0.0))
        g = source_step(f, p, dt, newton)
        s = 1 / (1 - mp.mpf(p.psi))
        k = mp_settling(p) * mp_bradford(p) * dt
        C0 = mp.mpf(h0) * mp.mpf(c0)
        M = h0 - s * C0
        b = M + k - s * C0
        C = (-b + mp.sqrt(b * b + 4 * s * C0 * M)) / (2 * s)
        bound = 10 * newton.tol * (1 + h0)
        np.testing.assert_allclose(g.interior[:, 3], float(C), rtol=0, atol=bound)
        np.testing.assert_allclose(g.interior[:, 0], float(M + s * C), rtol=0, atol=bound)
        np.testing.assert_allclose(g.interior[:, 4], float(s * (C0 - C)), rtol=0, atol=bound)

    def test_rest_is_fixed_point(self, p):
        f = lake_at_rest(Grid(0, 1, 16), 1.0, lambda x: 0.2 * x)
        np.testing.assert_array_equal(source_step(f, p, 10.0).interior, f.interior)

    def test_fast_mode_keeps_suspension(self, p):
        f = uniform_field(Grid(0, 1, 8), conservative(1.0, 0.0, 0.0, 0.01, 0.0))
        g = source_step(f, p, 1.0, mode=SourceMode.FAST)
        np.testing.assert_array_equal(g.interior, f.interior)

    def test_relaxation_is_monotone(self, p):
        f = uniform_field(Grid(0, 1, 8), conservative(1.0, 0.3, -0.1, 0.0, 0.0))
        eq = []
        for _ in range(5):
            f = source_step(f, p, 0.1)
            pr = f.primitives()
            eq.append(abs(pr["u_m"][0]) + abs(pr["alpha_1"][0]))
        assert all(b < a for a, b in zip(eq, eq[1:]))

    def test_newton_budget_exhausted(self, p):
        f = uniform_field(Grid(0, 1, 8), conservative(1.0, 1.0, 0.5, 0.05, 0.0))
        with pytest.raises(NewtonDivergence):
            source_step(f, p, 1.0, NewtonSettings(tol=1e-15, max_iter=1))

    @pytest.mark.parametrize("kw", [{"tol": 0.0}, {"max_iter": 0}])
    def test_newton_settings_validated(self, kw):
        with pytest.raises(ValueError):
            NewtonSettings(**kw)


class TestSplitting:
    def test_operators_can_be_frozen(self, p):
        f = init_relaxation_scenario(30)
        dt = cfl_dt(f, p, 0.45)
        np.testing.assert_array_equal(step(f, p, dt, source=False).W, transport_step(f, p, dt).W)
        np.testing.assert_array_equal(step(f, p, dt, transport=False).W, source_step(f, p, dt).W)

    @pytest.mark.parametrize("splitting, order", [(Splitting.LIE, 1), (Splitting.STRANG, 2)])
    def test_order_on_linear_surrogate(self, splitting, order):
        # two non-commuting linear flows acting on the first two components
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        B = np.array([[-2.0, 0.0], [0.5, -0.3]])
        w0 = np.array([1.0, 0.5])
        T = 1.0

        def flow(m):
            def apply(g, h):
                out = g.copy()
                out.W[:, :2] = out.W[:, :2] @ expm(m * h).T
                out.t += h
                return out
            return apply

        exact = expm((A + B) * T) @ w0
        errors = []
        for n in (20, 40, 80):
            f = Field(Grid(0, 1, 4), np.tile(np.r_[w0, 0, 0, 0], (8, 1)))
            for _ in range(n):
                f = split_step(f, T / n, flow(A), flow(B), splitting)
            assert f.t == pytest.approx(T)
            errors.append(np.linalg.norm(f.W[0, :2] - exact))
        rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        np.testing.assert_allclose(rates, order, atol=0.1)

    def test_lie_and_strang_agree_to_first_order(self, p):
        f = init_relaxation_scenario(60)
        dt = 0.5 * cfl_dt(f, p, 0.45)
        lie = step(f, p, dt, Splitting.LIE)
        strang = step(f, p, dt, Splitting.STRANG)
        diff = np.max(np.abs(lie.interior - strang.interior))
        assert diff <= 10 * dt * np.max(np.abs(f.interior))


class TestRun:
    def test_hits_requested_times(self, p):
        f = init_relaxation_scenario(30)
        res = run(f, p, 0.2, snapshot_times=(0.0, 0.05, 0.2), timeseries_interval=0.1)
        assert [t for t, _ in res.snapshots] == [0.0, 0.05, 0.2]
        assert [d.t for d in res.timeseries] == pytest.approx([0.0, 0.1, 0.2])
        assert res.final.t == 0.2
        assert res.n_steps > 0

    def test_max_steps(self, p):
        res = run(init_relaxation_scenario(30), p, 10.0, max_steps=3)
        assert res.n_steps == 3
        assert res.final.t < 10.0

    def test_lie_run_matches_manual_steps(self, p):
        f = init_relaxation_scenario(40)
        res = run(f, p, 1.0, max_steps=5)
        g = f
        for _ in range(5):
            g = step(g, p, cfl_dt(g, p, 0.45))
        np.testing.assert_array_equal(res.final.W, g.W)

    def test_strang_run_is_admissible(self, p):
        res = run(init_relaxation_scenario(40), p, 0.2, splitting=Splitting.STRANG)
        assert np.all(res.final.interior[:, 0] > 0)

    def test_periodic_run_conserves(self):
        p = Parameters(epsilon=15.0, nu=10.0)
        f = init_relaxation_scenario(60, boundary=PERIODIC)
        s0, q0, _ = totals(f, p)
        res = run(f, p, 1.0)
        s1, q1, _ = totals(res.final, p)
        assert abs(s1 - s0) <= 1e-12 * s0
        assert abs(q1 - q0) <= 1e-12 * q0

    @pytest.mark.parametrize("n", [100, 300, 1000])
    def test_preset_survives_the_transient(self, n):
        # the strongest gradients and bed changes happen in the first seconds
        p = Parameters(epsilon=15.0, nu=10.0)
        res = run(init_relaxation_scenario(n), p, 2.0, cfl=0.45)
        assert res.final.t == 2.0
        res.final.check_admissible(p)

    def test_lie_strang_gap_shrinks_linearly(self):
        p = Parameters(epsilon=15.0, nu=10.0)
        gaps = []
        for cfl in (0.4, 0.2, 0.1):
            lie = run(init_relaxation_scenario(100), p, 1.0, cfl=cfl).final.interior
            strang = run(init_relaxation_scenario(100), p, 1.0, cfl=cfl, splitting=Splitting.STRANG).final.interior
            gaps.append(np.max(np.abs(lie - strang), axis=0))
        for coarse, fine in zip(gaps, gaps[1:]):
            np.testing.assert_allclose(coarse / fine, 2.0, rtol=0.1)

    def test_results_do_not_depend_on_thread_count(self):
        import numba

        available = numba.config.NUMBA_NUM_THREADS
        if available < 2:
            pytest.skip("only one numba thread available")
        p = Parameters(epsilon=15.0, nu=10.0)
        finals = []
        try:
            for n_threads in (1, available):
                numba.set_num_threads(n_threads)
                finals.append(run(init_relaxation_scenario(120), p, 0.5).final.W)
        finally:
            numba.set_num_threads(available)
        np.testing.assert_array_equal(finals[0], finals[1])

    def test_thread_setting(self, monkeypatch):
        monkeypatch.setenv("SWEMED1_THREADS", "0")
        with pytest.raises(ValueError):
            set_threads_from_env()
        monkeypatch.setenv("SWEMED1_THREADS", "1")
        set_threads_from_env()
