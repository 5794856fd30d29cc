"""Adaptive integration of the profile-curve system with terminal events.

Stepping is done by the Dormand-Prince 5(4) pair of :class:`scipy.integrate.RK45`;
this module owns event detection, bisection refinement on the quartic dense
interpolant and the immutable :class:`Trajectory` record.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .ode_core import HALF_PI, ChartError, Derivative, Params, State, rhs, stall_margin

ARCLENGTH_BOUND = 3.0 * math.sqrt(2.0) * math.pi / 4.0


class IntegrationError(RuntimeError):
    pass


class StepFailure(IntegrationError):
    """The step-size controller could not meet the tolerances."""


class ChartExit(IntegrationError):
    """The vector field left its chart away from any detected event."""


class NoSignChange(ValueError):
    """An event bracket does not straddle the event."""


class OutcomeKind(enum.Enum):
    HIT_R = "HitR"
    HIT_A = "HitA"
    STALL = "Stall"
    THETA_COLLAPSE = "ThetaCollapse"
    TIMEOUT = "Timeout"

    def __str__(self):
        return self.value


# tie-break order among events refined to the same arclength
EVENT_ORDER = (
    OutcomeKind.THETA_COLLAPSE,
    OutcomeKind.HIT_R,
    OutcomeKind.HIT_A,
    OutcomeKind.STALL,
)


@dataclass(frozen=True)
class IntegrationControls:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_arclength: float = ARCLENGTH_BOUND + 0.5
    theta_floor: float = 1e-6
    event_tol: float = 1e-12
    max_steps: int = 1_000_000
    stall_eps: float = 1e-9
    # interior interpolant probes per step when scanning for sign changes
    event_probes: int = 4

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_arclength", "theta_floor", "event_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    terminal_state: State
    terminal_margin: float
    # every event kind whose refined time lies within event_tol of the winner
    simultaneous: tuple = ()


class _DenseStep:
    """Quartic interpolant of one accepted step, ``y = y0 + h Q [x, x^2, x^3, x^4]``."""

    __slots__ = ("t0", "t1", "h", "y0", "Q")

    def __init__(self, t0, t1, y0, Q):
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.h = self.t1 - self.t0
        self.y0 = np.array(y0, dtype=float)
        self.Q = np.array(Q, dtype=float)

    def __call__(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / self.h
        p = np.stack([x, x * x, x ** 3, x ** 4])
        y = self.h * np.tensordot(self.Q, p, axes=(1, 0))
        return (y.T + self.y0).T

    def derivative(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / self.h
        p = np.stack([np.ones_like(x), 2 * x, 3 * x * x, 4 * x ** 3])
        return np.tensordot(self.Q, p, axes=(1, 0))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration, truncated at the terminal event.

    ``s`` holds the sample arclengths, ``y`` the states ``(r, theta, alpha)``
    and ``dy`` the vector field at those states.
    """

    s: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    outcome: Outcome
    params: Params
    steps: tuple = field(repr=False, default=())
    controls: IntegrationControls = field(repr=False, default_factory=IntegrationControls)

    def __post_init__(self):
        for arr in (self.s, self.y, self.dy):
            arr.setflags(write=False)

    @property
    def s_star(self):
        return float(self.s[-1])

    @property
    def initial(self):
        return State(*self.y[0], float(self.s[0]))

    @property
    def terminal(self):
        return self.outcome.terminal_state

    @property
    def kind(self):
        return self.outcome.kind

    def states(self):
        return [State(*row, float(si)) for row, si in zip(self.y, self.s)]

    def derivatives(self):
        return [Derivative(*row) for row in self.dy]

    def _check_range(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.s[0]) or np.any(s > self.s[-1]):
            raise ValueError(
                f"arclength outside [{self.s[0]!r}, {self.s[-1]!r}]"
            )
        return s

    def evaluate(self, s):
        """Interpolated ``(r, theta, alpha)`` rows at arclengths ``s``.

        Sample knots are returned exactly as stored.
        """
        s = self._check_range(s)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.empty((s.size, 3))
        idx = np.searchsorted(self.s, s, side="left")
        exact = (idx < self.s.size) & (self.s[np.minimum(idx, self.s.size - 1)] == s)
        out[exact] = self.y[idx[exact]]
        rest = ~exact
        if np.any(rest):
            step_idx = np.clip(idx[rest] - 1, 0, len(self.steps) - 1)
            vals = np.empty((rest.sum(), 3))
            for k in np.unique(step_idx):
                sel = step_idx == k
                vals[sel] = self.steps[k](s[rest][sel]).T
            out[rest] = vals
        return out[0] if scalar else out

    def evaluate_derivative(self, s):
        """Derivative of the dense interpolant (not the vector field) at ``s``."""
        s = self._check_range(s)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.steps) - 1)
        out = np.empty((s.size, 3))
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.steps[k].derivative(s[sel]).T
        return out[0] if scalar else out


def sample(traj, s):
    """Interpolated :class:`State` at arclength ``s`` in ``[0, s*]``."""
    r, theta, alpha = traj.evaluate(float(s))
    return State(float(r), float(theta), float(alpha), float(s))


def refine_event(interpolant, bracket, event, tol=1e-12):
    """Bisect ``event(interpolant(s))`` on ``bracket`` down to width ``tol``.

    ``event`` is positive before the event and non-positive at or after it.
    Returns the midpoint of the final bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError(f"empty bracket ({lo!r}, {hi!r})")
    if hi - lo <= tol:
        return 0.5 * (lo + hi)
    g_lo = event(interpolant(lo))
    g_hi = event(interpolant(hi))
    if not (g_lo > 0.0 and g_hi <= 0.0):
        raise NoSignChange(f"event values {g_lo!r}, {g_hi!r} on ({lo!r}, {hi!r})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if event(interpolant(mid)) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _event_functions(params, controls):
    n, H = params.n, params.H
    floor = controls.theta_floor
    eps = controls.stall_eps

    def g_theta(y):
        return y[1] - floor

    def g_r(y):
        return HALF_PI - y[0]

    def g_alpha(y):
        return -y[2]

    def g_stall(y):
        return rhs(y[0], y[1], y[2], n, H)[2] - eps

    return {
        OutcomeKind.THETA_COLLAPSE: g_theta,
        OutcomeKind.HIT_R: g_r,
        OutcomeKind.HIT_A: g_alpha,
        OutcomeKind.STALL: g_stall,
    }


def _stall_zero(params):
    n, H = params.n, params.H

    def g(y):
        return rhs(y[0], y[1], y[2], n, H)[2]

    return g


def _first_crossing(step, ys, event, tol):
    """Earliest refined crossing of ``event`` inside ``step``, or None."""
    g = [event(y) for y in ys]
    xs = np.linspace(step.t0, step.t1, len(ys))
    for j in range(len(ys) - 1):
        if g[j] > 0.0 and g[j + 1] <= 0.0:
            def interp(t, j=j):
                if t == xs[j]:
                    return ys[j]
                if t == xs[j + 1]:
                    return ys[j + 1]
                return step(t)

            return refine_event(interp, (xs[j], xs[j + 1]), event, tol)
    return None


def integrate(initial, params, controls=None):
    """Integrate forward from ``initial`` until the first terminal event.

    Events fire when their indicator passes from positive to non-positive:
    ``theta <= theta_floor`` (ThetaCollapse), ``r >= pi/2`` (HitR),
    ``alpha >= 0`` (HitA) and ``alpha' <= stall_eps`` (Stall). Reaching
    ``max_arclength`` first gives Timeout.

    Raises
    ------
    StepFailure
        If the step controller fails or ``max_steps`` is exceeded.
    ChartExit
        If the vector field leaves its chart before an event is detected.
    """
    controls = controls or IntegrationControls()
    n, H = params.n, params.H
    y0 = np.array([initial.r, initial.theta, initial.alpha], dtype=float)
    s0 = float(initial.s)

    def fun(_s, y):
        return rhs(y[0], y[1], y[2], n, H)

    try:
        solver = RK45(
            fun, s0, y0, s0 + controls.max_arclength,
            rtol=controls.rel_tol, atol=controls.abs_tol,
        )
    except ChartError as exc:
        raise ChartExit(str(exc)) from exc

    events = _event_functions(params, controls)
    alpha_rate = _stall_zero(params)
    ss, ys = [s0], [y0]
    steps = []
    hit = None
    probes = controls.event_probes

    while hit is None:
        if len(steps) >= controls.max_steps:
            raise StepFailure(f"exceeded max_steps={controls.max_steps}")
        y_prev = solver.y.copy()
        try:
            msg = solver.step()
        except ChartError as exc:
            raise ChartExit(str(exc)) from exc
        if solver.status == "failed":
            raise StepFailure(msg or "step failed")
        dense = solver.dense_output()
        step = _DenseStep(dense.t_old, dense.t, dense.y_old, dense.Q)
        steps.append(step)

        grid = np.linspace(step.t0, step.t1, probes + 2)
        inner = step(grid[1:-1]).T if probes else np.empty((0, 3))
        probe_states = [y_prev, *inner, solver.y.copy()]
        try:
            times = {}
            for kind in EVENT_ORDER:
                t = _first_crossing(step, probe_states, events[kind], controls.event_tol)
                if t is not None:
                    times[kind] = t
            if OutcomeKind.STALL in times:
                # a transversal zero of alpha' inside the step is located
                # exactly; the stall_eps threshold only catches touch-downs
                t = _first_crossing(step, probe_states, alpha_rate, controls.event_tol)
                if t is not None:
                    times[OutcomeKind.STALL] = t
        except ChartError as exc:
            raise ChartExit(str(exc)) from exc

        if times:
            t_hit = min(times.values())
            tied = tuple(k for k in EVENT_ORDER
                         if k in times and times[k] - t_hit <= controls.event_tol)
            hit = (tied[0], t_hit, tied)
            break

        ss.append(float(solver.t))
        ys.append(solver.y.copy())
        if solver.status == "finished":
            break

    if hit is None:
        kind, tied = OutcomeKind.TIMEOUT, ()
        s_end, y_end = ss[-1], ys[-1]
    else:
        kind, s_end, tied = hit
        # keep knots strictly increasing
        s_end = max(float(s_end), math.nextafter(ss[-1], math.inf))
        y_end = steps[-1](s_end)
        ss.append(s_end)
        ys.append(np.asarray(y_end, dtype=float))

    y_arr = np.array(ys)
    dy_arr = np.array([rhs(r, th, a, n, H) for r, th, a in y_arr])
    terminal = State(*map(float, y_arr[-1]), float(ss[-1]))
    try:
        margin = stall_margin(terminal, params)
    except ChartError:
        margin = math.nan
    outcome = Outcome(kind, terminal, margin, tied if len(tied) > 1 else ())
    return Trajectory(np.array(ss), y_arr, dy_arr, outcome, params, tuple(steps), controls)


def reintegrate(traj, rel_tol):
    """Re-run ``traj`` from its initial state at ``rel_tol`` (and a matching
    ``abs_tol``) unless it was already integrated at least that tightly."""
    c = traj.controls
    if c.rel_tol <= rel_tol:
        return traj
    controls = c.replace(rel_tol=rel_tol, abs_tol=min(c.abs_tol, rel_tol * 1e-2))
    return integrate(traj.initial, traj.params, controls)
