"""Shooting in the initial radius ``r0`` for quarter arcs that close up.

A quarter arc started at ``(r0, pi/4, -pi/2)`` ends either on the equator
``r = pi/2`` (HitR) or with a radial tangent ``alpha = 0`` (HitA). Initial
radii at which the outcome flips are where both happen at once; those arcs
generate closed profile curves.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .integrator import (
    ARCLENGTH_BOUND,
    IntegrationControls,
    OutcomeKind,
    Trajectory,
    integrate,
)
from .ode_core import HALF_PI, Params, State, initial_state, radius_bound

HIT_A = OutcomeKind.HIT_A
HIT_R = OutcomeKind.HIT_R

DEFAULT_SCAN_STEPS = 512
DEFAULT_R0_MIN = 0.05
DEFAULT_TOP_GAP = 1e-4
# extra scan points a(H) - 10**-k; for n >= 4 the upper branch sits
# within 1e-8 of a(H)
DEFAULT_TAIL_DEPTHS = tuple(range(5, 14))
RESIDUAL_TARGET = 1e-6


class ShootingError(RuntimeError):
    pass


class InvalidInitial(ValueError):
    pass


class StallEncountered(ShootingError):
    def __init__(self, r0, params):
        super().__init__(
            f"stall at r0={r0!r} for n={params.n}, H={params.H}; "
            "parameters lie outside the validated regime"
        )
        self.r0 = r0
        self.params = params


class NoBracket(ShootingError):
    pass


@dataclass(frozen=True)
class ScanResult:
    params: Params
    grid: tuple  # of (r0, OutcomeKind, State)
    brackets: tuple  # of (r0_lo, r0_hi)

    @property
    def r0(self):
        return np.array([g[0] for g in self.grid])

    @property
    def kinds(self):
        return [g[1] for g in self.grid]


@dataclass(frozen=True, eq=False)
class BranchResult:
    rho: float
    residual_r: float
    residual_alpha: float
    s_star: float
    trajectory: Trajectory = field(repr=False)
    bracket: tuple = ()
    bisections: int = 0

    @property
    def params(self):
        return self.trajectory.params

    @property
    def converged(self):
        return max(self.residual_r, self.residual_alpha) < RESIDUAL_TARGET


def _check_shooting_params(params):
    if params.H > 0:
        raise ValueError(f"shooting needs H <= 0, got H={params.H}")


def shoot(r0, params, controls=None):
    """Integrate the quarter arc starting at radius ``r0``."""
    _check_shooting_params(params)
    a = radius_bound(params)
    if not 0.0 < r0 < a:
        raise InvalidInitial(f"r0={r0!r} outside (0, a(H)={a!r})")
    return integrate(initial_state(r0), params, controls)


def classify(r0, params, controls=None):
    """Terminal event kind and terminal state of the arc from ``r0``."""
    traj = shoot(r0, params, controls)
    return traj.outcome.kind, traj.outcome.terminal_state


def _classify_task(r0, params, controls):
    kind, state = classify(r0, params, controls)
    return float(r0), kind, state


def scan(params, r0_min, r0_max, steps, controls=None, extra=(), workers=None):
    """Classify a uniform grid of initial radii and bracket every HitA/HitR flip.

    ``extra`` radii are merged into the grid. With ``workers > 1`` the grid
    is classified in a process pool; results are identical either way.

    Raises
    ------
    StallEncountered
        On the first (smallest) ``r0`` whose arc ends in a stall.
    ShootingError
        If any arc ends in ThetaCollapse or Timeout.
    """
    _check_shooting_params(params)
    a = radius_bound(params)
    if not 0.0 < r0_min < r0_max < a:
        raise ValueError(f"need 0 < r0_min < r0_max < a(H)={a!r}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    r0s = np.linspace(r0_min, r0_max, steps)
    extra = [x for x in extra if 0.0 < x < a]
    r0s = np.unique(np.concatenate([r0s, np.asarray(extra, dtype=float)]))

    task = partial(_classify_task, params=params, controls=controls)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            grid = list(pool.map(task, r0s, chunksize=16))
    else:
        grid = [task(x) for x in r0s]

    for r0, kind, _ in grid:
        if kind is OutcomeKind.STALL:
            raise StallEncountered(r0, params)
        if kind not in (HIT_A, HIT_R):
            raise ShootingError(f"{kind} outcome at r0={r0!r} for {params}")

    brackets = tuple(
        (lo[0], hi[0]) for lo, hi in zip(grid, grid[1:]) if lo[1] is not hi[1]
    )
    return ScanResult(params, tuple(grid), brackets)


def default_scan_range(params):
    a = radius_bound(params)
    return DEFAULT_R0_MIN, a - DEFAULT_TOP_GAP


def tail_points(params, controls=None, depths=DEFAULT_TAIL_DEPTHS):
    """Radii ``a(H) - 10**-k`` for increasing ``k``, stopping before the first
    one whose arc does not end cleanly in HitA or HitR (near ``a(H)`` the
    terminal ``theta`` eventually drops below ``theta_floor``)."""
    a = radius_bound(params)
    out = []
    for k in depths:
        r0 = a - 10.0 ** -k
        if not r0 < a:
            break
        if classify(r0, params, controls)[0] not in (HIT_A, HIT_R):
            break
        out.append(r0)
    return out


def _residuals(traj):
    t = traj.outcome.terminal_state
    return abs(t.r - HALF_PI), abs(t.alpha)


def bisect_bracket(params, bracket, controls=None, branch_tol=1e-8, max_iter=80):
    """Bisect on outcome kind until the bracket is narrower than ``branch_tol``
    and the midpoint arc meets both terminal conditions to ``RESIDUAL_TARGET``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    k_lo = classify(lo, params, controls)[0]
    k_hi = classify(hi, params, controls)[0]
    if k_lo is k_hi or {k_lo, k_hi} != {HIT_A, HIT_R}:
        raise NoBracket(f"({lo!r}, {hi!r}) does not straddle a HitA/HitR flip")
    it = 0
    while True:
        mid = 0.5 * (lo + hi)
        traj = shoot(mid, params, controls)
        res_r, res_a = _residuals(traj)
        if traj.kind is OutcomeKind.STALL:
            raise StallEncountered(mid, params)
        narrow = hi - lo < branch_tol
        if (narrow and max(res_r, res_a) < RESIDUAL_TARGET) or it >= max_iter or mid in (lo, hi):
            break
        if traj.kind is k_lo:
            lo = mid
        else:
            hi = mid
        it += 1
    return BranchResult(mid, res_r, res_a, traj.s_star, traj, (lo, hi), it)


def find_branches(params, controls=None, branch_tol=1e-8, steps=DEFAULT_SCAN_STEPS,
                  r0_min=None, r0_max=None, workers=None):
    """All initial radii whose quarter arc hits ``r = pi/2`` and ``alpha = 0``
    together, sorted by radius.

    The scan grid is uniform on ``[r0_min, r0_max]``. Unless ``r0_max`` is
    given, points ``a(H) - 10**-k`` are added to resolve branches crowding
    against ``a(H)``.
    """
    lo_default, hi_default = default_scan_range(params)
    extra = tail_points(params, controls) if r0_max is None else ()
    r0_min = lo_default if r0_min is None else r0_min
    r0_max = hi_default if r0_max is None else r0_max
    result = scan(params, r0_min, r0_max, steps, controls, extra=extra, workers=workers)
    if not result.brackets:
        raise NoBracket(f"no HitA/HitR flip found for {params}")
    branches = [bisect_bracket(params, b, controls, branch_tol) for b in result.brackets]
    return sorted(branches, key=lambda b: b.rho)


def epsilon_bound(n, r0_prime, delta):
    """Admissible ``|H|`` for the two-branch construction: the minimum of
    ``sqrt2 sin(r0'/2) / (12 (1 - sin(r0'/2)))``, ``delta`` and
    ``sqrt2 (n-1) tan(pi / (4 (2n-1)))``."""
    if not 0.0 < r0_prime < HALF_PI:
        raise ValueError("r0_prime must lie in (0, pi/2)")
    if not delta > 0:
        raise ValueError("delta must be positive")
    sh = math.sin(0.5 * r0_prime)
    first = math.sqrt(2.0) * sh / (12.0 * (1.0 - sh))
    third = math.sqrt(2.0) * (n - 1) * math.tan(math.pi / (4 * (2 * n - 1)))
    return min(first, delta, third)


def boundary_radii(scan_result):
    """Grid representatives ``(r0', r0'')`` on either side of the first flip:
    the last HitA radius below it and the first HitR radius above it."""
    for lo, hi in scan_result.brackets:
        kinds = dict((g[0], g[1]) for g in scan_result.grid)
        if kinds[lo] is HIT_A and kinds[hi] is HIT_R:
            return lo, hi
    raise NoBracket("no HitA -> HitR flip in scan")


def estimate_delta(n, r0_prime, r0_double_prime, controls=None, k_max=12):
    """Empirical witness for the perturbation size ``delta``.

    Tests ``H = -2**-k`` from ``k = k_max`` up to ``k = 1`` and returns the
    largest ``|H|`` such that at it, and at every smaller tested ``|H|``, the
    arc from ``r0_prime`` still ends HitA and the arc from
    ``r0_double_prime`` still ends HitR. Returns 0.0 if even ``2**-k_max``
    fails.
    """
    best = 0.0
    for k in range(k_max, 0, -1):
        params = Params(n, -(2.0 ** -k))
        try:
            ok = (classify(r0_prime, params, controls)[0] is HIT_A
                  and classify(r0_double_prime, params, controls)[0] is HIT_R)
        except InvalidInitial:
            ok = False
        if not ok:
            break
        best = 2.0 ** -k
    return best


def arclength_bound():
    return ARCLENGTH_BOUND
