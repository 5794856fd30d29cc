"""Vector field of the profile-curve system and its pointwise companions.

A profile curve ``(r(s), theta(s))`` on the upper quadrant of S^2, with
``alpha`` the angle between its tangent and d/dr, generates the doubly
rotational hypersurface S^{n-1} x S^{n-1} x S^1 in S^{2n}.  The hypersurface
has constant mean curvature ``H`` exactly when

    r'     = cos(alpha)
    theta' = sin(alpha) / sin(r)
    alpha' = (2n-2) cot(2 theta) cos(alpha) / sin(r) - (2n-1) cot(r) sin(alpha) + H

Angles are never reduced modulo 2 pi.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi

#: below this, cotangent terms carry no precision and the chart is left
CHART_EPS = 1e-14


class ChartError(ValueError):
    """Raised when a state leaves the chart where the system is defined."""


@dataclass(frozen=True)
class Params:
    """Dimension parameter ``n`` and mean curvature ``H``."""

    n: int
    H: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        if not math.isfinite(self.H):
            raise ValueError(f"H must be finite, got {self.H!r}")


class State(NamedTuple):
    r: float
    theta: float
    alpha: float
    s: float = 0.0


class Derivative(NamedTuple):
    dr: float
    dtheta: float
    dalpha: float


def _cot_2theta(theta):
    if theta == QUARTER_PI:
        return 0.0
    s2 = math.sin(2.0 * theta)
    if abs(s2) < CHART_EPS:
        raise ChartError(f"sin(2 theta) vanishes at theta={theta!r}")
    return math.cos(2.0 * theta) / s2


def _sin_r(r):
    sr = math.sin(r)
    if abs(sr) < CHART_EPS:
        raise ChartError(f"sin(r) vanishes at r={r!r}")
    return sr


def rhs(r, theta, alpha, n, H):
    """Scalar right-hand side ``(dr, dtheta, dalpha)`` without the wrappers."""
    sr = _sin_r(r)
    c2 = _cot_2theta(theta)
    ca = math.cos(alpha)
    sa = math.sin(alpha)
    dalpha = (2 * n - 2) * c2 * ca / sr - (2 * n - 1) * (math.cos(r) / sr) * sa + H
    return ca, sa / sr, dalpha


def vector_field(state, params):
    """Evaluate the system at ``state``.

    Raises
    ------
    ChartError
        If ``|sin r|`` or ``|sin 2 theta|`` is below ``CHART_EPS``.
    """
    return Derivative(*rhs(state.r, state.theta, state.alpha, params.n, params.H))


def alpha_second_derivative(state, params):
    """Second arclength derivative of ``alpha`` on the locus ``alpha' = 0``.

    Away from that locus the value is not the true second derivative: the
    ``d alpha'/d alpha * alpha'`` contribution is dropped.
    """
    n = params.n
    r, theta, alpha = state.r, state.theta, state.alpha
    sr = _sin_r(r)
    c2 = _cot_2theta(theta)
    s2 = math.sin(2.0 * theta)
    ca = math.cos(alpha)
    sa = math.sin(alpha)
    sr2 = sr * sr
    return (
        -(4 * n - 4) * sa * ca / (sr2 * s2 * s2)
        - (2 * n - 2) * math.cos(r) * ca * ca * c2 / sr2
        + (2 * n - 1) * ca * sa / sr2
    )


def stall_margin(state, params):
    """``(2n-2) cot(2 theta) cos(alpha) + H``.

    A nonnegative value anywhere on a quarter arc rules out termination by
    ``alpha' = 0``.
    """
    return (2 * params.n - 2) * _cot_2theta(state.theta) * math.cos(state.alpha) + params.H


def radius_bound(params):
    """``a(H) = arccot(-H / (2n-1))``, the supremum of admissible initial radii.

    It is also the equilibrium radius of the flow with ``theta`` frozen at
    pi/4. Uses the (0, pi) branch of arccot, so ``a(0) = pi/2``.
    """
    return math.atan2(2 * params.n - 1, -params.H)


class Symmetry(enum.Enum):
    POLAR_REFLECTION = "polar"
    ANGULAR_REFLECTION = "angular"
    ALPHA_SHIFT = "alpha_shift"


def apply_symmetry(state, kind, k=0):
    """Pointwise image of ``state`` under one of the solution symmetries.

    The two reflections map solutions to solutions only together with the
    time reversal ``s -> -s``; ``s`` is carried through unchanged here.
    """
    r, theta, alpha, s = state
    if kind is Symmetry.POLAR_REFLECTION:
        return State(math.pi - r, theta, -alpha, s)
    if kind is Symmetry.ANGULAR_REFLECTION:
        return State(r, HALF_PI - theta, math.pi - alpha, s)
    if kind is Symmetry.ALPHA_SHIFT:
        return State(r, theta, alpha + 2 * k * math.pi, s)
    raise ValueError(f"unknown symmetry {kind!r}")


def in_box(state):
    """True iff ``(r, theta, alpha)`` lies in the open box
    ``(0, pi/2) x (0, pi/4) x (-pi/2, 0)``."""
    return (
        0.0 < state.r < HALF_PI
        and 0.0 < state.theta < QUARTER_PI
        and -HALF_PI < state.alpha < 0.0
    )


def initial_state(r0):
    """Shooting start ``(r0, pi/4, -pi/2)`` at ``s = 0``."""
    return State(float(r0), QUARTER_PI, -HALF_PI, 0.0)


def field_array(y, params):
    """Vectorised :func:`vector_field` over rows ``(r, theta, alpha)``.

    No chart checks: singular rows come back as inf/nan.
    """
    y = np.asarray(y, dtype=float)
    r, theta, alpha = y[..., 0], y[..., 1], y[..., 2]
    n, H = params.n, params.H
    sr = np.sin(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        c2 = np.where(theta == QUARTER_PI, 0.0, np.cos(2 * theta) / np.sin(2 * theta))
        ca, sa = np.cos(alpha), np.sin(alpha)
        out = np.stack([
            ca,
            sa / sr,
            (2 * n - 2) * c2 * ca / sr - (2 * n - 1) * (np.cos(r) / sr) * sa + H,
        ], axis=-1)
    return out
