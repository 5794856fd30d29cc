"""Closed profile curves assembled from a quarter arc, and their diagnostics.

The quarter arc runs from ``(rho, pi/4, -pi/2)`` to ``(pi/2, theta*, 0)``.
Reflecting it across the equator (reversing arclength) gives the half curve
ending at ``(pi - rho, pi/4, pi/2)``; reflecting that half across
``theta = pi/4`` (again reversing arclength) closes the loop. On the four
arcs, with ``x`` the quarter arc and ``q`` the local arclength:

    [0, s*]     x(q)
    [s*, 2s*]   (pi - r, theta, -alpha)(s* - q)
    [2s*, 3s*]  (pi - r, pi/2 - theta, pi + alpha)(q)
    [3s*, 4s*]  (r, pi/2 - theta, pi - alpha)(s* - q)

``alpha`` is continued without wrapping and ends at ``3 pi / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .integrator import OutcomeKind, reintegrate
from .ode_core import HALF_PI, Params, radius_bound
from .shooting import RESIDUAL_TARGET, NoBracket, bisect_bracket, classify

GLUE_FD_WEIGHTS = np.array([25.0, -48.0, 36.0, -16.0, 3.0]) / 12.0
SINGULAR_BAND = 1e-6
CLOSURE_TOL = 1e-6
TANGENT_TOL = 1e-5
GLUE_FD_STEP = 1e-4
# quarter arcs are re-integrated at this tolerance before resampling; the
# interpolant derivative error scales like rel_tol**0.8
CURVE_REL_TOL = 1e-13


class CurveError(RuntimeError):
    pass


class ClosureFailure(CurveError):
    pass


class OrientationFailure(CurveError):
    pass


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Uniformly resampled closed loop.

    ``points`` has columns ``s, r, theta, alpha`` and ``n_points + 1`` rows;
    the last row sits at ``s = 4 s*`` over the first. ``dalpha`` is the
    arclength derivative of ``alpha`` taken from the dense interpolant.
    """

    points: np.ndarray
    dalpha: np.ndarray
    quarter_length: float
    closure_gap: float
    tangent_gap: float
    min_self_distance: float
    simple: bool
    params: Params
    rho: float
    glue_indices: tuple = ()
    trajectory: object = field(default=None, repr=False)

    @property
    def total_length(self):
        return 4.0 * self.quarter_length

    @property
    def s(self):
        return self.points[:, 0]

    @property
    def r(self):
        return self.points[:, 1]

    @property
    def theta(self):
        return self.points[:, 2]

    @property
    def alpha(self):
        return self.points[:, 3]

    def rtheta(self):
        return self.points[:, 1:3]

    def state_at(self, s):
        """Exact ``(r, theta, alpha)`` rows at loop arclengths ``s`` in ``[0, 4 s*]``."""
        if self.trajectory is None:
            raise CurveError("curve carries no generating trajectory")
        return _loop_states(self.trajectory, np.asarray(s, dtype=float))[0]


def _arc_states(traj, arc, q):
    """States and interpolant ``alpha'`` on arc ``arc`` at local arclengths ``q``."""
    s_star = traj.s_star
    q = np.clip(np.atleast_1d(np.asarray(q, dtype=float)), 0.0, s_star)
    q_eval = s_star - q if arc in (1, 3) else q
    y = traj.evaluate(q_eval)
    da = traj.evaluate_derivative(q_eval)[:, 2]
    r, th, al = y[:, 0], y[:, 1], y[:, 2]
    if arc == 0:
        out = (r, th, al)
    elif arc == 1:
        out = (math.pi - r, th, -al)
    elif arc == 2:
        out = (math.pi - r, HALF_PI - th, math.pi + al)
    elif arc == 3:
        out = (r, HALF_PI - th, math.pi - al)
    else:
        raise ValueError(f"arc index {arc!r} not in 0..3")
    return np.column_stack(out), da


def _loop_states(traj, s):
    """States and interpolant ``alpha'`` at loop arclengths ``s``.

    A point at an exact multiple ``k s*`` belongs to the arc ending there.
    """
    s_star = traj.s_star
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0) or np.any(s > 4 * s_star * (1 + 1e-15)):
        raise ValueError("arclength outside the closed loop")
    arc = np.clip(np.ceil(s / s_star).astype(int) - 1, 0, 3)
    out = np.empty((s.size, 3))
    da = np.empty(s.size)
    for k in range(4):
        sel = arc == k
        if sel.any():
            out[sel], da[sel] = _arc_states(traj, k, s[sel] - k * s_star)
    return out, da


def _glue_report(traj):
    """Largest ``(r, theta)`` jump and tangent jump over the four glue points."""
    x0 = traj.y[0]
    xs = traj.y[-1]
    pi = math.pi
    # (end of incoming arc, start of outgoing arc) at s*, 2s*, 3s*, 4s*
    pairs = [
        ((xs[0], xs[1], xs[2]), (pi - xs[0], xs[1], -xs[2])),
        ((pi - x0[0], x0[1], -x0[2]), (pi - x0[0], HALF_PI - x0[1], pi + x0[2])),
        ((pi - xs[0], HALF_PI - xs[1], pi + xs[2]), (xs[0], HALF_PI - xs[1], pi - xs[2])),
        ((x0[0], HALF_PI - x0[1], pi - x0[2]), (x0[0], x0[1], x0[2])),
    ]
    gap = 0.0
    tangent = 0.0
    for a, b in pairs:
        gap = max(gap, math.hypot(a[0] - b[0], a[1] - b[1]))
        d = (a[2] - b[2] + pi) % (2 * pi) - pi
        tangent = max(tangent, abs(d))
    return gap, tangent


def _terminal_residual(traj):
    t = traj.terminal
    return max(abs(t.r - HALF_PI), abs(t.alpha))


def _rebisect(branch, controls, max_widen=40):
    """Branch trajectory re-located at ``controls``.

    Near ``a(H)`` the terminal radius is so sensitive to ``r0`` that a root
    found at the shooting tolerance is no root at a tighter one. The bracket
    is widened around ``rho`` until the outcome flips at ``controls``, then
    bisected again.
    """
    params = branch.params
    a = radius_bound(params)
    rho = branch.rho
    w = max(branch.bracket[1] - branch.bracket[0], 1e-13) if branch.bracket else 1e-12
    for _ in range(max_widen):
        lo, hi = rho - w, min(rho + w, 0.5 * (rho + a))
        kinds = {classify(lo, params, controls)[0], classify(hi, params, controls)[0]}
        if kinds == {OutcomeKind.HIT_A, OutcomeKind.HIT_R}:
            return bisect_bracket(params, (lo, hi), controls, branch_tol=1e-12).trajectory
        w *= 2.0
    raise NoBracket(f"branch near rho={rho!r} lost at rel_tol={controls.rel_tol}")


def build_closed_profile(branch, n_points=2048, closure_tol=CLOSURE_TOL,
                         tangent_tol=TANGENT_TOL, refine_tol=CURVE_REL_TOL, check=True):
    """Assemble the closed loop of ``branch`` and run its diagnostics.

    Unless ``refine_tol`` is None, the quarter arc is first re-integrated
    from ``branch.rho`` with ``rel_tol=refine_tol`` (if that is tighter than
    the branch's own run), so that ``alpha'`` read off the interpolant is
    accurate. If a converged branch's re-integrated arc misses the terminal
    conditions by ``0.1 * RESIDUAL_TARGET`` or more, the branch is bisected
    again at that tolerance and ``rho`` moves accordingly. Unconverged
    branches are glued as they are.

    Raises
    ------
    ClosureFailure
        If a glue point opens a gap of ``closure_tol`` or more in ``(r, theta)``.
    OrientationFailure
        If the tangent angle jumps by more than ``tangent_tol`` (mod 2 pi).
    """
    if n_points % 4 or n_points < 8:
        raise ValueError("n_points must be a positive multiple of 4 (>= 8)")
    traj = branch.trajectory
    if refine_tol is not None:
        traj = reintegrate(traj, refine_tol)
        # the equator glue gap is twice the radial residual
        if branch.converged and _terminal_residual(traj) >= 0.1 * RESIDUAL_TARGET:
            traj = _rebisect(branch, traj.controls)
    s_star = traj.s_star
    quarter = n_points // 4
    q = np.linspace(0.0, s_star, quarter + 1)
    pieces = [_arc_states(traj, k, q[(1 if k else 0):]) for k in range(4)]
    states = np.concatenate([p[0] for p in pieces])
    dalpha = np.concatenate([p[1] for p in pieces])
    s = np.concatenate([k * s_star + q[(1 if k else 0):] for k in range(4)])
    glue = tuple(k * quarter for k in range(5))
    gap, tangent = _glue_report(traj)
    if check and gap >= closure_tol:
        raise ClosureFailure(f"closure gap {gap:.3e} >= {closure_tol:.1e}")
    if check and tangent > tangent_tol:
        raise OrientationFailure(f"tangent jump {tangent:.3e} > {tangent_tol:.1e}")
    points = np.column_stack([s, states])
    closure = max(gap, float(np.hypot(*(points[-1, 1:3] - points[0, 1:3]))))
    simple, dmin = is_simple(points[:, 1:3])
    return ProfileCurve(
        points=points,
        dalpha=dalpha,
        quarter_length=s_star,
        closure_gap=closure,
        tangent_gap=tangent,
        min_self_distance=dmin,
        simple=simple,
        params=traj.params,
        rho=float(traj.y[0, 0]),
        glue_indices=glue,
        trajectory=traj,
    )


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _point_segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = np.where(L2 > 0, ((px - ax) * dx + (py - ay) * dy) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _segments_intersect(a, b, c, d):
    """Closed-segment intersection for ``ab`` against arrays of ``cd``."""
    o1 = _orient(a[0], a[1], b[0], b[1], c[:, 0], c[:, 1])
    o2 = _orient(a[0], a[1], b[0], b[1], d[:, 0], d[:, 1])
    o3 = _orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], a[0], a[1])
    o4 = _orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], b[0], b[1])
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)

    def on_seg(p, q, r):
        # r collinear with pq and inside its bounding box
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        return np.all((lo <= r) & (r <= hi), axis=-1)

    A = np.broadcast_to(a, c.shape)
    B = np.broadcast_to(b, c.shape)
    touch = ((o1 == 0) & on_seg(A, B, c)) | ((o2 == 0) & on_seg(A, B, d)) \
        | ((o3 == 0) & on_seg(c, d, A)) | ((o4 == 0) & on_seg(c, d, B))
    return proper | touch


def is_simple(curve):
    """Self-intersection test of a closed polyline.

    ``curve`` is a :class:`ProfileCurve` (tested in the ``(r, theta)`` plane)
    or an ``(m, 2)`` vertex array; a repeated final vertex is dropped.
    Segments sharing a vertex are only checked for folding back onto each
    other. Returns
    ``(simple, min_self_distance)`` where the distance is the smallest gap
    between non-adjacent segments (0 if any pair meets).
    """
    pts = curve.rtheta() if isinstance(curve, ProfileCurve) else np.asarray(curve, dtype=float)
    if len(pts) > 1 and np.allclose(pts[0], pts[-1], rtol=0.0, atol=1e-12):
        pts = pts[:-1]
    m = len(pts)
    if m < 3:
        raise ValueError("need at least 3 distinct vertices")
    nxt = np.roll(pts, -1, axis=0)
    prv = np.roll(pts, 1, axis=0)
    # adjacent segments overlap when the path folds back on itself
    turn = _orient(prv[:, 0], prv[:, 1], pts[:, 0], pts[:, 1], nxt[:, 0], nxt[:, 1])
    back = np.einsum("ij,ij->i", prv - pts, nxt - pts)
    if np.any((turn == 0) & (back > 0)):
        return False, 0.0
    dmin = math.inf
    simple = True
    for i in range(m - 2):
        j0 = i + 2
        j1 = m - 1 if i == 0 else m
        if j0 >= j1:
            continue
        a, b = pts[i], nxt[i]
        c, d = pts[j0:j1], nxt[j0:j1]
        hit = _segments_intersect(a, b, c, d)
        if hit.any():
            simple = False
            dmin = 0.0
            break
        dist = np.minimum.reduce([
            _point_segment_distance(a[0], a[1], c[:, 0], c[:, 1], d[:, 0], d[:, 1]),
            _point_segment_distance(b[0], b[1], c[:, 0], c[:, 1], d[:, 0], d[:, 1]),
            _point_segment_distance(c[:, 0], c[:, 1], a[0], a[1], b[0], b[1]),
            _point_segment_distance(d[:, 0], d[:, 1], a[0], a[1], b[0], b[1]),
        ])
        dmin = min(dmin, float(dist.min()))
    return simple, dmin


def embed(r, theta):
    """Point ``(sin r cos theta, sin r sin theta, cos r)`` on S^2."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sr = np.sin(r)
    return np.stack([sr * np.cos(theta), sr * np.sin(theta), np.cos(r)], axis=-1)


def immersion_point(r, theta, p1, p2):
    """``(x p1, y p2, z)`` in R^{2n+1} for unit vectors ``p1``, ``p2`` in R^n."""
    x, y, z = embed(r, theta)
    return np.concatenate([x * np.asarray(p1, float), y * np.asarray(p2, float), [z]])


def immersion_sample(curve, p1, p2, s):
    """Image in S^{2n} of the point at loop arclength ``s`` and fibre ``(p1, p2)``."""
    r, theta, _ = curve.state_at(s)[0]
    return immersion_point(r, theta, p1, p2)


def implied_mean_curvature(r, theta, alpha, dalpha, n):
    """Mean curvature read off the third equation of the system."""
    r, theta, alpha, dalpha = map(np.asarray, (r, theta, alpha, dalpha))
    sr = np.sin(r)
    return (dalpha - (2 * n - 2) * (np.cos(2 * theta) / np.sin(2 * theta)) * np.cos(alpha) / sr
            + (2 * n - 1) * (np.cos(r) / sr) * np.sin(alpha))


def _glue_derivatives(curve, h=GLUE_FD_STEP):
    """One-sided fourth-order differences of ``alpha`` at the glue points,
    taken inside the arc that ends at the glue point (the first point looks
    forward into the first arc).

    The step is capped at a quarter of the integrator's step next to each
    end, which tracks how fast ``alpha`` turns there.
    """
    traj = curve.trajectory
    s_star = curve.quarter_length
    knots = traj.s
    h_start = min(h, s_star / 8, 0.25 * (knots[1] - knots[0]))
    # the final knot is the event; use the last full step
    h_end = min(h, s_star / 8, 0.25 * (knots[-2] - knots[-3]) if len(knots) > 2 else h)
    out = {}
    for k, g in enumerate(curve.glue_indices):
        if k == 0:
            alpha = _arc_states(traj, 0, h_start * np.arange(5))[0][:, 2]
            out[g] = -float(GLUE_FD_WEIGHTS @ alpha) / h_start
        else:
            # arcs 0 and 2 end at s*, arcs 1 and 3 end at the start of x
            hk = h_end if k in (1, 3) else h_start
            alpha = _arc_states(traj, k - 1, s_star - hk * np.arange(5))[0][:, 2]
            out[g] = float(GLUE_FD_WEIGHTS @ alpha) / hk
    return out


def cmc_residual(curve, params=None):
    """Largest ``|H_implied - H|`` along the loop.

    ``alpha'`` comes from the dense interpolant, except at glue points where
    one-sided differences of the resampled ``alpha`` are used. Points with
    ``|sin 2 theta|`` or ``|sin r|`` below 1e-6 are skipped.
    """
    params = params or curve.params
    dalpha = np.array(curve.dalpha, dtype=float)
    for g, val in _glue_derivatives(curve).items():
        dalpha[g] = val
    r, theta, alpha = curve.r, curve.theta, curve.alpha
    keep = (np.abs(np.sin(2 * theta)) >= SINGULAR_BAND) & (np.abs(np.sin(r)) >= SINGULAR_BAND)
    implied = implied_mean_curvature(r[keep], theta[keep], alpha[keep], dalpha[keep], params.n)
    return float(np.max(np.abs(implied - params.H)))


def reflect_points(rtheta, polar=True, angular=True):
    pts = np.array(rtheta, dtype=float)
    if polar:
        pts[:, 0] = math.pi - pts[:, 0]
    if angular:
        pts[:, 1] = HALF_PI - pts[:, 1]
    return pts


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance between two point sets in ``(r, theta)``."""
    pa = a.rtheta() if isinstance(a, ProfileCurve) else np.asarray(a, float)
    pb = b.rtheta() if isinstance(b, ProfileCurve) else np.asarray(b, float)
    return max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])
