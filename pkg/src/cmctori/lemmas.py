"""Numerical checks of the quantitative statements about quarter arcs.

Every check returns a :class:`LemmaReport`. Margins follow one sign
convention: positive means the statement holds with room to spare. Checks
whose statement is conditional only assert the conclusion where the
hypothesis holds; other cases are counted as vacuous.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrator import (
    ARCLENGTH_BOUND,
    IntegrationControls,
    OutcomeKind,
    reintegrate,
)
from .ode_core import (
    HALF_PI,
    QUARTER_PI,
    Params,
    Symmetry,
    apply_symmetry,
    field_array,
    radius_bound,
    vector_field,
)
from .shooting import default_scan_range, shoot

DEFAULT_N = (2, 3, 4)
DEFAULT_H = (-0.01, -0.05, -0.1, -0.2)
DEFAULT_R0_POINTS = 64
DENSE_SAMPLES = 256
SYMMETRY_POINTS = 256
SYMMETRY_TOL = 1e-6
SYMMETRY_REL_TOL = 1e-12
SYMMETRY_FD_STEP = 1e-5
MAX_WITNESSES = 16

LEMMA_IDS = (
    "symmetry",
    "monotonicity",
    "stall_margin",
    "alpha_linear_bound",
    "arclength",
    "alpha_quarter_bound",
    "no_stall",
    "limit",
    "tolerance_convergence",
)


@dataclass
class LemmaReport:
    lemma_id: str
    cases_run: int = 0
    cases_passed: int = 0
    vacuous: int = 0
    worst_margin: float = math.inf
    witnesses: list = field(default_factory=list)

    @property
    def passed(self):
        return self.cases_passed == self.cases_run

    def record(self, margin, ok, witness=None):
        self.cases_run += 1
        self.cases_passed += bool(ok)
        if witness is not None and (not ok or margin < self.worst_margin):
            self._add_witness(dict(witness, margin=margin, ok=bool(ok)))
        self.worst_margin = min(self.worst_margin, margin)

    def _add_witness(self, w):
        self.witnesses.append(w)
        # failures first, then smallest margins
        self.witnesses.sort(key=lambda w: (w["ok"], w["margin"]))
        del self.witnesses[MAX_WITNESSES:]

    def merge(self, other):
        if other.lemma_id != self.lemma_id:
            raise ValueError("cannot merge reports of different checks")
        out = LemmaReport(
            self.lemma_id,
            self.cases_run + other.cases_run,
            self.cases_passed + other.cases_passed,
            self.vacuous + other.vacuous,
            min(self.worst_margin, other.worst_margin),
        )
        for w in self.witnesses + other.witnesses:
            out._add_witness(w)
        return out

    def to_dict(self):
        return {
            "lemma_id": self.lemma_id,
            "cases_run": self.cases_run,
            "cases_passed": self.cases_passed,
            "vacuous": self.vacuous,
            "worst_margin": None if math.isinf(self.worst_margin) else self.worst_margin,
            "passed": self.passed,
            "witnesses": [dict(w) for w in self.witnesses],
        }

    @classmethod
    def from_dict(cls, d):
        wm = d["worst_margin"]
        return cls(
            d["lemma_id"], d["cases_run"], d["cases_passed"], d["vacuous"],
            math.inf if wm is None else wm, [dict(w) for w in d["witnesses"]],
        )


def _witness(traj, s=None, **values):
    p = traj.params
    return {"n": p.n, "H": p.H, "r0": float(traj.y[0, 0]),
            "s": None if s is None else float(s), "values": values}


def _interior(traj, count=DENSE_SAMPLES):
    """Dense interior arclengths: the accepted knots plus a uniform grid."""
    s_star = traj.s_star
    grid = np.linspace(0.0, s_star, count + 2)[1:-1]
    s = np.unique(np.concatenate([traj.s[1:-1], grid]))
    return s[(s > 0.0) & (s < s_star)]


def check_monotonicity(traj, report=None):
    """Strict signs ``r' > 0``, ``theta' < 0``, ``alpha' > 0`` inside ``(0, s*)``."""
    report = report or LemmaReport("monotonicity")
    s = _interior(traj)
    d = field_array(traj.evaluate(s), traj.params)
    m = np.minimum.reduce([d[:, 0], -d[:, 1], d[:, 2]])
    i = int(np.argmin(m))
    margin = float(m[i])
    report.record(margin, margin > 0.0,
                  _witness(traj, s[i], dr=d[i, 0], dtheta=d[i, 1], dalpha=d[i, 2]))
    return report


def check_arclength_bound(traj, report=None):
    """Terminal arclength below ``3 sqrt(2) pi / 4``."""
    report = report or LemmaReport("arclength")
    margin = ARCLENGTH_BOUND - traj.s_star
    report.record(margin, margin > 0.0, _witness(traj, traj.s_star))
    return report


def stall_margins(traj, s):
    p = traj.params
    y = traj.evaluate(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        c2 = np.where(y[:, 1] == QUARTER_PI, 0.0, 1.0 / np.tan(2 * y[:, 1]))
    return (2 * p.n - 2) * c2 * np.cos(y[:, 2]) + p.H


def check_stall_margin_criterion(traj, report=None):
    """Once the stall margin is nonnegative the arc cannot end in a stall.

    Where the margin turns nonnegative inside ``(0, s*)``, the run must end
    HitR/HitA with ``alpha'(s*) > 0``. Runs whose margin stays negative are
    vacuous.
    """
    report = report or LemmaReport("stall_margin")
    s = _interior(traj)
    sm = stall_margins(traj, s)
    hits = np.nonzero(sm >= 0.0)[0]
    if hits.size == 0:
        report.vacuous += 1
        return report
    da = vector_field(traj.terminal, traj.params).dalpha
    ok = traj.kind is not OutcomeKind.STALL and da > 0.0
    report.record(float(da), ok, _witness(traj, s[hits[0]], dalpha_terminal=da,
                                          kind=str(traj.kind)))
    return report


def _lemma_c(H, r0):
    return H * (1.0 - 1.0 / math.sin(r0))


def check_alpha_linear_bound(traj, r0=None, report=None):
    """``alpha + pi/2 < (2n-1)(pi/4 - theta) + H (1 - 1/sin r0) s``.

    The bound follows by integrating ``alpha' < -(2n-1) theta' + H (1 -
    1/sin r0)``, which holds pointwise where the stall margin is negative;
    it is asserted on the initial stretch ``(0, s1)`` of the arc on which the
    margin stays negative.
    """
    report = report or LemmaReport("alpha_linear_bound")
    p = traj.params
    r0 = float(traj.y[0, 0]) if r0 is None else r0
    s = _interior(traj)
    sm = stall_margins(traj, s)
    stop = np.nonzero(sm >= 0.0)[0]
    s = s[: stop[0]] if stop.size else s
    if s.size == 0:
        report.vacuous += 1
        return report
    y = traj.evaluate(s)
    lhs = y[:, 2] + HALF_PI
    rhs = (2 * p.n - 1) * (QUARTER_PI - y[:, 1]) + _lemma_c(p.H, r0) * s
    gap = rhs - lhs
    i = int(np.argmin(gap))
    report.record(float(gap[i]), bool(np.all(gap > 0.0)),
                  _witness(traj, s[i], lhs=lhs[i], rhs=rhs[i]))
    return report


def hypotheses(params, r0):
    """Margins of the sufficient conditions that exclude a stall, as a dict.

    ``linear``: ``1 - 3 sqrt2 H (1 - 1/sin r0)`` (needs > 0);
    ``curvature``: ``H + sqrt2/2 (2n - 3)`` (needs >= 0);
    ``tangent``: ``sqrt2 (n-1) tan(2/(2n-1) (pi/4 - H (1 - 1/sin r0) 3 sqrt2 pi/4)) + H``
    (needs >= 0).
    """
    n, H = params.n, params.H
    c = _lemma_c(H, r0)
    root2 = math.sqrt(2.0)
    arg = (2.0 / (2 * n - 1)) * (QUARTER_PI - c * ARCLENGTH_BOUND)
    return {
        "linear": 1.0 - 3.0 * root2 * c,
        "curvature": H + 0.5 * root2 * (2 * n - 3),
        "tangent": root2 * (n - 1) * math.tan(arg) + H,
    }


def alpha_bound_hypotheses_hold(params, r0):
    h = hypotheses(params, r0)
    return h["linear"] > 0.0 and h["tangent"] >= 0.0


def no_stall_hypotheses_hold(params, r0):
    h = hypotheses(params, r0)
    return h["linear"] > 0.0 and h["curvature"] >= 0.0 and h["tangent"] >= 0.0


def check_alpha_quarter_bound(traj, r0=None, report=None, require_hypotheses=True):
    """On a stalled arc satisfying the hypotheses, ``alpha < -pi/4`` on ``(0, s*]``.

    Arcs that do not stall, or (with ``require_hypotheses``) that violate the
    hypotheses, are vacuous.
    """
    report = report or LemmaReport("alpha_quarter_bound")
    r0 = float(traj.y[0, 0]) if r0 is None else r0
    if require_hypotheses and not alpha_bound_hypotheses_hold(traj.params, r0):
        report.vacuous += 1
        return report
    if traj.kind is not OutcomeKind.STALL:
        report.vacuous += 1
        return report
    s = np.append(_interior(traj), traj.s_star)
    alpha = traj.evaluate(s)[:, 2]
    i = int(np.argmax(alpha))
    margin = -QUARTER_PI - float(alpha[i])
    report.record(margin, margin > 0.0, _witness(traj, s[i], alpha=alpha[i]))
    return report


def check_no_stall(params, r0_range=None, steps=100, controls=None, report=None):
    """No stall on any ``r0`` in the grid that satisfies the three hypotheses.

    The margin of a tested run is ``alpha'(s*)``.
    """
    report = report or LemmaReport("no_stall")
    lo, hi = r0_range or default_scan_range(params)
    for r0 in np.linspace(lo, hi, steps):
        if not no_stall_hypotheses_hold(params, r0):
            report.vacuous += 1
            continue
        traj = shoot(r0, params, controls)
        da = vector_field(traj.terminal, params).dalpha
        ok = traj.kind is not OutcomeKind.STALL
        report.record(float(da), ok, _witness(traj, traj.s_star, kind=str(traj.kind),
                                              dalpha_terminal=da, **hypotheses(params, r0)))
    return report


def asymptotic_depths(params, count=5, k_max=12, controls=None):
    """``count`` consecutive depths ``k`` starting at the first one whose arc
    from ``a(H) - 10**-k`` ends HitA, i.e. past the last branch.

    Returns an empty range if no depth up to ``k_max`` qualifies.
    """
    a = radius_bound(params)
    for k in range(1, k_max + 1):
        if shoot(a - 10.0 ** -k, params, controls).kind is OutcomeKind.HIT_A:
            return range(k, min(k + count, k_max + 1))
    return range(0)


def check_limit_approach(params, depths=range(1, 6), controls=None, report=None):
    """Terminal radii approach ``a(H)`` as ``r0 = a(H) - 10**-k`` grows in ``k``.

    Margin: ``1 - max`` ratio of successive deviations ``|r(s*) - a(H)|``.
    ``depths=None`` picks :func:`asymptotic_depths`; with fewer than two
    depths the case is vacuous.
    """
    report = report or LemmaReport("limit")
    if depths is None:
        depths = asymptotic_depths(params, controls=controls)
    depths = list(depths)
    if len(depths) < 2:
        report.vacuous += 1
        return report
    a = radius_bound(params)
    devs = []
    for k in depths:
        traj = shoot(a - 10.0 ** -k, params, controls)
        devs.append(abs(traj.terminal.r - a))
    ratios = [d1 / d0 for d0, d1 in zip(devs, devs[1:])]
    margin = 1.0 - max(ratios)
    report.record(margin, all(r < 1.0 for r in ratios),
                  {"n": params.n, "H": params.H, "a": a, "depths": depths,
                   "deviations": devs})
    return report


def _reflect_rows(y, kind):
    out = np.array(y, dtype=float)
    if kind is Symmetry.POLAR_REFLECTION:
        out[:, 0] = math.pi - out[:, 0]
        out[:, 2] = -out[:, 2]
    else:
        out[:, 1] = HALF_PI - out[:, 1]
        out[:, 2] = math.pi - out[:, 2]
    return out


def symmetry_residual(traj, kind, points=SYMMETRY_POINTS, h=SYMMETRY_FD_STEP):
    """Largest relative ODE residual of the reflected, time-reversed path.

    The path ``z(s) = R(x(-s))`` is differentiated with a fourth-order
    central difference at ``points`` interior arclengths and compared with
    the vector field at ``z``; residuals are scaled by ``max(1, |f|)``.
    """
    s_star = traj.s_star
    u = np.linspace(0.0, s_star, points + 2)[1:-1]
    h = min(h, 0.25 * u[0])

    def z(v):
        return _reflect_rows(traj.evaluate(v), kind)

    # z(s + kh) = R(x(u - kh)) with s = -u
    dz = (-z(u - 2 * h) + 8 * z(u - h) - 8 * z(u + h) + z(u + 2 * h)) / (12 * h)
    f = field_array(z(u), traj.params)
    return float(np.max(np.abs(dz - f) / np.maximum(1.0, np.abs(f))))


def check_symmetry_solutions(traj, report=None, tol=SYMMETRY_TOL, refine_tol=SYMMETRY_REL_TOL):
    """Reflected arcs solve the system; ``alpha`` shifts by ``2 pi k`` are exact.

    The arc is first re-integrated at ``refine_tol`` so that the finite
    difference sees the solution rather than interpolation error.
    """
    report = report or LemmaReport("symmetry")
    if refine_tol is not None:
        traj = reintegrate(traj, refine_tol)
    worst = 0.0
    for kind in (Symmetry.POLAR_REFLECTION, Symmetry.ANGULAR_REFLECTION):
        worst = max(worst, symmetry_residual(traj, kind))
    shift_ok = True
    for st in traj.states()[1:-1:7]:
        base = vector_field(st, traj.params)
        for k in (-1, 1):
            shifted = vector_field(apply_symmetry(st, Symmetry.ALPHA_SHIFT, k), traj.params)
            shift_ok &= all(abs(a - b) <= 1e-12 * max(1.0, abs(a)) for a, b in zip(base, shifted))
    margin = tol - worst
    report.record(margin, margin > 0.0 and shift_ok,
                  _witness(traj, residual=worst, alpha_shift_ok=bool(shift_ok)))
    return report


def check_tolerance_convergence(params, r0, controls=None, threshold=None, report=None):
    """Halving ``rel_tol`` moves the terminal ``(r, theta, alpha, s)`` by less
    than ``threshold`` (default: 100 x the default ``rel_tol``)."""
    report = report or LemmaReport("tolerance_convergence")
    controls = controls or IntegrationControls()
    threshold = 100.0 * IntegrationControls().rel_tol if threshold is None else threshold
    a = shoot(r0, params, controls)
    b = shoot(r0, params, controls.replace(rel_tol=0.5 * controls.rel_tol))
    change = max(abs(x - y) for x, y in zip(a.terminal, b.terminal))
    margin = threshold - change
    report.record(margin, margin > 0.0, _witness(a, a.s_star, change=change,
                                                 rel_tol=controls.rel_tol))
    return report


def _sweep_cell(args):
    n, H, r0_points, controls, lemmas = args
    params = Params(n, H)
    reports = {}

    def rep(lid):
        return reports.setdefault(lid, LemmaReport(lid))

    lo, hi = default_scan_range(params)
    per_traj = {
        "monotonicity": check_monotonicity,
        "arclength": check_arclength_bound,
        "stall_margin": check_stall_margin_criterion,
        "alpha_linear_bound": lambda t, report: check_alpha_linear_bound(t, report=report),
        "alpha_quarter_bound": lambda t, report: check_alpha_quarter_bound(t, report=report),
        "symmetry": check_symmetry_solutions,
    }
    active = [k for k in per_traj if k in lemmas]
    if active:
        for r0 in np.linspace(lo, hi, r0_points):
            traj = shoot(r0, params, controls)
            for lid in active:
                per_traj[lid](traj, report=rep(lid))
    if "no_stall" in lemmas:
        check_no_stall(params, (lo, hi), r0_points, controls, report=rep("no_stall"))
    if "limit" in lemmas:
        check_limit_approach(params, depths=None, controls=controls, report=rep("limit"))
    if "tolerance_convergence" in lemmas:
        for r0 in np.linspace(lo, hi, 4)[1:-1]:
            check_tolerance_convergence(params, r0, controls, report=rep("tolerance_convergence"))
    return reports


def run_suite(ns=DEFAULT_N, Hs=DEFAULT_H, r0_points=DEFAULT_R0_POINTS, controls=None,
              lemmas=None, workers=None):
    """Run the selected checks over the ``(n, H)`` grid; returns ``{id: LemmaReport}``
    in :data:`LEMMA_IDS` order."""
    lemmas = tuple(LEMMA_IDS if lemmas is None else lemmas)
    unknown = set(lemmas) - set(LEMMA_IDS)
    if unknown:
        raise ValueError(f"unknown lemma ids: {sorted(unknown)}")
    cells = [(n, H, r0_points, controls, lemmas) for n in ns for H in Hs]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    merged = {}
    for cell in results:
        for lid, rep in cell.items():
            merged[lid] = merged[lid].merge(rep) if lid in merged else rep
    return {lid: merged[lid] for lid in LEMMA_IDS if lid in merged}
