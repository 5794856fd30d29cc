import dataclasses
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LinearRing

from cmctori.curve import (
    ClosureFailure,
    OrientationFailure,
    build_closed_profile,
    cmc_residual,
    embed,
    hausdorff_distance,
    immersion_point,
    immersion_sample,
    implied_mean_curvature,
    is_simple,
    reflect_points,
)
from cmctori.ode_core import HALF_PI, QUARTER_PI, Params
from cmctori.shooting import bisect_bracket

R2 = math.sqrt(2.0)


class TestLoop:
    def test_closed(self, fig_curves):
        for c in fig_curves:
            assert c.closure_gap < 1e-6
            assert c.tangent_gap < 1e-5
            assert np.hypot(*(c.rtheta()[-1] - c.rtheta()[0])) < 1e-6

    def test_simple(self, fig_curves):
        for c in fig_curves:
            assert c.simple and c.min_self_distance > 0
            assert LinearRing(c.rtheta()[:-1]).is_simple

    def test_length(self, fig_curves):
        for c in fig_curves:
            assert c.total_length == pytest.approx(4 * c.quarter_length, abs=1e-9)
            assert c.s[-1] == pytest.approx(c.total_length, abs=1e-9)

    def test_default_resolution(self, fig_curves):
        assert all(len(c.points) == 2049 for c in fig_curves)
        assert np.all(np.diff(fig_curves[0].s) > 0)

    def test_crosses_diagonal_at_rho(self, fig_curves, fig_branches):
        # start and the opposite glue point lie on theta = pi/4
        for c, b, rho in zip(fig_curves, fig_branches, (1.29691, 1.44086)):
            g0, g2 = c.glue_indices[0], c.glue_indices[2]
            assert c.theta[g0] == pytest.approx(QUARTER_PI, abs=1e-12)
            assert c.theta[g2] == pytest.approx(QUARTER_PI, abs=1e-9)
            assert c.r[g0] == pytest.approx(rho, abs=5e-4)
            assert c.r[g2] == pytest.approx(math.pi - rho, abs=5e-4)
            assert c.r[g0] == pytest.approx(b.rho, abs=1e-12)

    def test_equator_glue_alpha_continuous(self, fig_curves):
        for c in fig_curves:
            g1, g3 = c.glue_indices[1], c.glue_indices[3]
            for g in (g1, g3):
                assert c.r[g] == pytest.approx(HALF_PI, abs=1e-6)
                a = c.alpha[g - 3:g + 4]
                assert np.all(np.diff(a) > 0)

    def test_start_glue_alpha_shift(self, fig_curves):
        # alpha returns as -pi/2 + 2 pi
        for c in fig_curves:
            assert c.alpha[0] == pytest.approx(-HALF_PI, abs=1e-15)
            assert c.alpha[-1] == pytest.approx(1.5 * math.pi, abs=1e-12)

    def test_double_reflection_invariance(self, fig_curves):
        for c in fig_curves:
            pts = c.rtheta()
            assert hausdorff_distance(pts, reflect_points(pts)) < 1e-6
            assert hausdorff_distance(pts, reflect_points(pts, angular=False)) < 1e-6

    def test_distinct(self, fig_curves):
        d = hausdorff_distance(*fig_curves)
        assert d > 0.05
        assert d >= abs(fig_curves[1].rho - fig_curves[0].rho) / 2

    def test_bad_resolution(self, fig_branches):
        with pytest.raises(ValueError):
            build_closed_profile(fig_branches[0], n_points=10)

    def test_loose_branch_fails_closure(self):
        b = bisect_bracket(Params(2, -0.2), (1.29, 1.30), max_iter=3)
        assert not b.converged
        with pytest.raises(ClosureFailure):
            build_closed_profile(b)

    def test_orientation_failure(self, fig_branches):
        with pytest.raises(OrientationFailure):
            build_closed_profile(fig_branches[0], tangent_tol=1e-30)

    def test_state_at_matches_points(self, fig_curves):
        c = fig_curves[1]
        np.testing.assert_allclose(c.state_at(c.s[::97]), c.points[::97, 1:], atol=1e-14)

    def test_minimal_case(self):
        from cmctori.shooting import find_branches
        branches = find_branches(Params(2, 0.0), steps=128)
        c = build_closed_profile(branches[0])
        assert c.simple and c.closure_gap < 1e-6
        assert cmc_residual(c) < 1e-6


class TestSimplicity:
    def test_figure_eight(self):
        pts = np.array([[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]], dtype=float)
        simple, _ = is_simple(pts)
        assert not simple

    def test_fold_back(self):
        assert not is_simple(np.array([[0, 0], [0, 1], [0, 2]], dtype=float))[0]

    def test_triangle(self):
        simple, dmin = is_simple(np.array([[0, 0], [1, 0], [0, 1], [0, 0]], dtype=float))
        assert simple and dmin > 0

    def test_touching_vertex(self):
        # a vertex lands on a non-adjacent edge
        pts = np.array([[0, 0], [2, 0], [2, 2], [1, 0], [0, 2], [0, 0]], dtype=float)
        assert not is_simple(pts)[0]

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=8,
                    unique=True))
    def test_matches_shapely(self, vertices):
        pts = np.array(vertices, dtype=float)
        ring = LinearRing(pts)
        closed = np.vstack([pts, pts[:1]])
        assert is_simple(closed)[0] == ring.is_simple

    def test_distance_of_square(self):
        sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
        simple, dmin = is_simple(sq)
        assert simple and dmin == pytest.approx(1.0)


class TestEmbedding:
    def test_equator_diagonal(self):
        np.testing.assert_allclose(embed(HALF_PI, QUARTER_PI), [R2 / 2, R2 / 2, 0.0], atol=1e-16)

    def test_branch_point(self):
        ref = [float(mp.sin(1.29691) * mp.cos(mp.pi / 4))] * 2 + [float(mp.cos(1.29691))]
        np.testing.assert_allclose(embed(1.29691, QUARTER_PI), ref, atol=1e-15)
        np.testing.assert_allclose(embed(1.29691, QUARTER_PI), [0.680754, 0.680754, 0.270477],
                                   atol=5e-6)

    @given(st.floats(0, math.pi), st.floats(0, HALF_PI), st.integers(2, 6), st.integers(0, 10 ** 6))
    def test_unit_norm(self, r, theta, n, seed):
        rng = np.random.default_rng(seed)
        p1, p2 = (v / np.linalg.norm(v) for v in rng.normal(size=(2, n)))
        F = immersion_point(r, theta, p1, p2)
        assert F.shape == (2 * n + 1,)
        assert np.linalg.norm(F) == pytest.approx(1.0, abs=1e-12)

    def test_samples_on_sphere(self, fig_curves):
        rng = np.random.default_rng(7)
        c = fig_curves[0]
        for s in np.linspace(0, c.total_length, 13):
            p1, p2 = rng.normal(size=(2, 2))
            F = immersion_sample(c, p1 / np.linalg.norm(p1), p2 / np.linalg.norm(p2), s)
            assert np.linalg.norm(F) == pytest.approx(1.0, abs=1e-12)


class TestCmcResidual:
    def test_full_loops(self, fig_curves):
        for c in fig_curves:
            assert cmc_residual(c) < 1e-6

    def test_exact_samples(self, fig_branches):
        traj = fig_branches[0].trajectory
        y, dy = traj.y[1:-1], traj.dy[1:-1]
        H = implied_mean_curvature(y[:, 0], y[:, 1], y[:, 2], dy[:, 2], 2)
        assert np.max(np.abs(H + 0.2)) < 1e-8

    def test_linear_response(self, fig_curves):
        c = fig_curves[0]
        bumped = dataclasses.replace(c, dalpha=c.dalpha + 1e-3)
        # glue points keep their finite-difference rates; the max is attained elsewhere
        assert cmc_residual(bumped) == pytest.approx(1e-3, rel=1e-3)

    def test_wrong_h_is_seen(self, fig_curves):
        assert cmc_residual(fig_curves[0], Params(2, -0.1)) == pytest.approx(0.1, abs=1e-6)
