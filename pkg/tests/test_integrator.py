import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from cmctori.integrator import (
    ARCLENGTH_BOUND,
    ChartExit,
    IntegrationControls,
    NoSignChange,
    OutcomeKind,
    StepFailure,
    integrate,
    refine_event,
    reintegrate,
    sample,
)
from cmctori.ode_core import (
    HALF_PI,
    QUARTER_PI,
    Params,
    State,
    Symmetry,
    apply_symmetry,
    initial_state,
    radius_bound,
    rhs,
    vector_field,
)

P = Params(2, -0.2)


def stall_setup():
    """Interior state where ``alpha'`` is slightly positive and falling."""
    r, theta, alpha = 0.3, 0.05, -0.01
    H = -rhs(r, theta, alpha, 2, 0.0)[2] + 1e-3
    return State(r, theta, alpha), Params(2, H)


def dop853_terminal(r0, params):
    """Independent oracle: scipy DOP853 with its own event location."""
    def f(_s, y):
        return rhs(*y, params.n, params.H)

    def hit_r(_s, y):
        return HALF_PI - y[0]

    def hit_a(_s, y):
        return -y[2]

    for e in (hit_r, hit_a):
        e.terminal, e.direction = True, -1
    sol = solve_ivp(f, (0.0, 4.0), [r0, QUARTER_PI, -HALF_PI], method="DOP853",
                    rtol=1e-13, atol=1e-15, events=[hit_r, hit_a])
    kind = OutcomeKind.HIT_R if sol.t_events[0].size else OutcomeKind.HIT_A
    return kind, sol.t[-1], sol.y[:, -1]


class TestControls:
    def test_defaults(self):
        c = IntegrationControls()
        assert (c.rel_tol, c.abs_tol, c.theta_floor, c.event_tol) == (1e-10, 1e-12, 1e-6, 1e-12)
        assert c.max_arclength == pytest.approx(3 * math.sqrt(2) * math.pi / 4 + 0.5)
        assert c.max_steps == 10 ** 6

    @pytest.mark.parametrize("name", ["rel_tol", "abs_tol", "max_arclength", "theta_floor", "event_tol"])
    def test_positive(self, name):
        with pytest.raises(ValueError):
            IntegrationControls(**{name: 0.0})


class TestIntegrate:
    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 1.45), st.sampled_from([Params(2, -0.2), Params(3, -0.05), Params(2, 0.0)]))
    def test_matches_independent_integrator(self, r0, params):
        if r0 >= radius_bound(params) - 1e-3:
            return
        traj = integrate(initial_state(r0), params)
        kind, s_end, y_end = dop853_terminal(r0, params)
        if abs(y_end[0] - HALF_PI) > 1e-6 or abs(y_end[2]) > 1e-6:
            assert traj.kind is kind
        assert traj.s_star == pytest.approx(s_end, abs=1e-8)
        np.testing.assert_allclose(traj.terminal[:3], y_end, atol=1e-8)

    @pytest.mark.xfail(strict=True, reason="the published radius 1.29691 sits 4e-4 below the "
                       "independently confirmed branch 1.2973053; the terminal radius misses "
                       "pi/2 by 1.27e-4")
    def test_published_radius_is_simultaneous_to_1e_4(self):
        t = integrate(initial_state(1.29691), P).terminal
        assert abs(t.r - HALF_PI) < 1e-4 and abs(t.alpha) < 1e-4

    def test_published_radius_is_simultaneous_to_5e_4(self):
        t = integrate(initial_state(1.29691), P).terminal
        assert abs(t.r - HALF_PI) < 5e-4 and abs(t.alpha) < 5e-4

    def test_small_radius_hits_alpha_first(self):
        traj = integrate(initial_state(0.2), P)
        assert traj.kind is OutcomeKind.HIT_A
        assert traj.terminal.r < HALF_PI
        assert abs(traj.terminal.alpha) < 1e-10

    @pytest.mark.parametrize("r0", [0.1, 0.7, 1.29, 1.35, 1.44, 1.5])
    def test_arclength_bound(self, r0):
        assert integrate(initial_state(r0), P).s_star < ARCLENGTH_BOUND
        assert ARCLENGTH_BOUND == pytest.approx(3.33216, abs=1e-5)

    @pytest.mark.parametrize("r0", [0.3, 1.0, 1.35, 1.48])
    def test_knots_monotone(self, r0):
        traj = integrate(initial_state(r0), P)
        assert np.all(np.diff(traj.s) > 0)
        inner = traj.y[1:-1]
        assert np.all(np.diff(inner[:, 0]) > 0)
        assert np.all(np.diff(inner[:, 1]) < 0)
        assert np.all(np.diff(inner[:, 2]) > 0)
        assert np.all(traj.dy[1:-1, 0] > 0) and np.all(traj.dy[1:-1, 1] < 0)
        assert np.all(traj.dy[1:-1, 2] > 0)

    def test_first_sample_is_initial(self):
        traj = integrate(initial_state(1.0), P)
        assert tuple(traj.y[0]) == (1.0, QUARTER_PI, -HALF_PI)
        assert traj.initial == initial_state(1.0)

    def test_hit_r_residual(self):
        traj = integrate(initial_state(1.35), P)
        assert traj.kind is OutcomeKind.HIT_R
        assert abs(traj.terminal.r - HALF_PI) < 1e-10
        assert traj.terminal.alpha < 0

    def test_theta_collapse(self):
        traj = integrate(initial_state(1.0), P, IntegrationControls(theta_floor=0.5))
        assert traj.kind is OutcomeKind.THETA_COLLAPSE
        assert traj.terminal.theta == pytest.approx(0.5, abs=1e-10)

    def test_timeout(self):
        traj = integrate(initial_state(1.0), P, IntegrationControls(max_arclength=0.1))
        assert traj.kind is OutcomeKind.TIMEOUT
        assert traj.s_star == pytest.approx(0.1)

    def test_stall_is_located(self):
        x0, params = stall_setup()
        traj = integrate(x0, params)
        assert traj.kind is OutcomeKind.STALL
        # located zero of alpha', checked by re-evaluating the field
        assert abs(vector_field(traj.terminal, params).dalpha) < 1e-9
        assert np.all(traj.dy[:-1, 2] > 0)

    def test_step_budget(self):
        with pytest.raises(StepFailure):
            integrate(initial_state(1.0), P, IntegrationControls(max_steps=2))

    def test_chart_exit(self):
        with pytest.raises(ChartExit):
            integrate(State(0.0, 0.5, -0.5), P)

    def test_simultaneous_events_are_flagged(self):
        # r and alpha both one rounding step from their terminal surfaces
        traj = integrate(State(HALF_PI - 1e-13, 0.5, -1e-13), Params(2, 0.0),
                         IntegrationControls(event_tol=1e-9))
        assert set(traj.outcome.simultaneous) == {OutcomeKind.HIT_R, OutcomeKind.HIT_A}
        assert traj.kind is OutcomeKind.HIT_R

    def test_tolerance_convergence(self):
        c = IntegrationControls()
        a = integrate(initial_state(1.1), P, c).terminal
        b = integrate(initial_state(1.1), P, c.replace(rel_tol=c.rel_tol / 2)).terminal
        assert max(abs(x - y) for x, y in zip(a, b)) < 100 * c.rel_tol

    def test_reversed_reflection_retraces(self, fig_branches):
        # start at the polar image of the terminal state, run forward, and
        # compare with the reflected original run backwards in arclength
        traj = reintegrate(fig_branches[0].trajectory, 1e-12)
        s_star = traj.s_star
        z0 = apply_symmetry(traj.terminal, Symmetry.POLAR_REFLECTION)
        q = np.linspace(0.0, s_star, 41)[1:-1]
        sol = solve_ivp(lambda _s, y: rhs(*y, 2, -0.2), (0.0, q[-1]), z0[:3], t_eval=q,
                        method="DOP853", rtol=1e-13, atol=1e-15)
        ref = traj.evaluate(s_star - q)
        ref[:, 0] = math.pi - ref[:, 0]
        ref[:, 2] = -ref[:, 2]
        assert np.max(np.abs(sol.y.T - ref)) < 10 * IntegrationControls().rel_tol


class TestSampling:
    def test_endpoints_exact(self):
        traj = integrate(initial_state(1.0), P)
        assert sample(traj, 0.0)[:3] == tuple(traj.y[0])
        assert sample(traj, traj.s_star)[:3] == tuple(traj.y[-1])
        for i in range(len(traj.s)):
            assert tuple(traj.evaluate(traj.s[i])) == tuple(traj.y[i])

    def test_out_of_range(self):
        traj = integrate(initial_state(1.0), P)
        for s in (-1e-9, traj.s_star + 1e-9):
            with pytest.raises(ValueError):
                sample(traj, s)

    def test_midpoint_reintegration_residual(self):
        traj = integrate(initial_state(1.0), P)
        rel_tol = traj.controls.rel_tol
        worst = 0.0
        for i in range(len(traj.s) - 2):
            mid = 0.5 * (traj.s[i] + traj.s[i + 1])
            sol = solve_ivp(lambda _s, y: rhs(*y, 2, -0.2), (mid, traj.s[i + 1]),
                            sample(traj, mid)[:3], method="DOP853", rtol=1e-13, atol=1e-15)
            worst = max(worst, np.max(np.abs(sol.y[:, -1] - traj.y[i + 1])))
        assert worst < 10 * rel_tol

    def test_derivative_matches_field(self):
        traj = reintegrate(integrate(initial_state(1.0), P), 1e-12)
        s = np.linspace(0.0, traj.s_star, 50)
        from cmctori.ode_core import field_array
        np.testing.assert_allclose(traj.evaluate_derivative(s), field_array(traj.evaluate(s), P),
                                   atol=1e-6)


class TestRefineEvent:
    def test_narrow_bracket_midpoint(self):
        assert refine_event(lambda s: s, (1.0, 1.0 + 5e-13), lambda y: 1.0 - y) == 1.0 + 2.5e-13

    def test_hit_r_crossing(self):
        traj = integrate(initial_state(1.35), P)
        step = traj.steps[-1]
        t = refine_event(step, (step.t0, step.t1), lambda y: HALF_PI - y[0])
        assert step.t0 <= t <= step.t1
        assert abs(step(t)[0] - HALF_PI) < 1e-10

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            refine_event(lambda s: s, (0.0, 1.0), lambda y: 2.0 - y)

    def test_empty_bracket(self):
        with pytest.raises(ValueError):
            refine_event(lambda s: s, (1.0, 1.0), lambda y: y)

    @given(st.floats(0.01, 0.99))
    def test_locates_linear_root(self, root):
        t = refine_event(lambda s: s, (0.0, 1.0), lambda y: root - y)
        assert abs(t - root) <= 1e-12


class TestReintegrate:
    def test_noop_when_tight_enough(self):
        traj = integrate(initial_state(1.0), P)
        assert reintegrate(traj, 1e-8) is traj

    def test_tightens(self):
        traj = reintegrate(integrate(initial_state(1.0), P), 1e-12)
        assert traj.controls.rel_tol == 1e-12
        assert traj.controls.abs_tol <= 1e-14
