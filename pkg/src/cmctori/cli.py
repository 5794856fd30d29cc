"""Command-line driver: ``solve``, ``sweep``, ``verify`` and ``render``.

Settings come from flags and from an optional flat ``key = value`` file
(``--config``); flags win. Artifacts go to ``<base>/<hash>/`` where ``base``
is ``./out`` (or ``$CMCTORI_OUT_DIR``) and ``hash`` is derived from the
resolved settings, so identical runs land in the same place.

Config keys: ``n``, ``H``, ``r0_min``, ``r0_max``, ``steps``, ``rel_tol``,
``abs_tol``, ``theta_floor``, ``max_arclength``, ``branch_tol``,
``n_points``, ``format``, ``projection``, ``workers``, ``lemma``
(comma separated), ``out``.

Exit status: 0 success, 1 solve or verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import export
from .curve import CurveError, build_closed_profile, cmc_residual
from .integrator import IntegrationControls, IntegrationError
from .lemmas import LEMMA_IDS, run_suite
from .ode_core import Params, radius_bound
from .shooting import (
    NoBracket,
    ShootingError,
    StallEncountered,
    boundary_radii,
    default_scan_range,
    epsilon_bound,
    estimate_delta,
    find_branches,
    scan,
)

OUT_ENV = "CMCTORI_OUT_DIR"
COMMANDS = ("solve", "sweep", "verify", "render")
CMC_TOL = 1e-6
REGIME_SCAN_STEPS = 64

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# key -> (type, default)
KEYS = {
    "n": (int, 2),
    "H": (float, -0.2),
    "r0_min": (float, None),
    "r0_max": (float, None),
    "steps": (int, None),
    "rel_tol": (float, None),
    "abs_tol": (float, None),
    "theta_floor": (float, None),
    "max_arclength": (float, None),
    "branch_tol": (float, 1e-8),
    "n_points": (int, 2048),
    "format": (str, None),
    "projection": (str, "rtheta"),
    "workers": (int, 1),
    "lemma": (str, None),
    "out": (str, None),
}
CONTROL_KEYS = ("rel_tol", "abs_tol", "theta_floor", "max_arclength")


class UsageError(Exception):
    pass


class StageFailure(Exception):
    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class RunConfig:
    command: str
    n: int = 2
    H: float = -0.2
    r0_min: float | None = None
    r0_max: float | None = None
    steps: int | None = None
    controls: dict = field(default_factory=dict)
    branch_tol: float = 1e-8
    n_points: int = 2048
    format: str | None = None
    projection: str = "rtheta"
    workers: int = 1
    lemmas: tuple | None = None
    out: str | None = None
    inputs: tuple = ()
    grid_given: bool = False

    @property
    def params(self):
        return Params(self.n, self.H)

    def integration_controls(self):
        return IntegrationControls(**self.controls)

    def key(self):
        """Settings that determine the artifacts (excludes workers and out)."""
        return {
            "command": self.command, "n": self.n, "H": self.H,
            "r0_min": self.r0_min, "r0_max": self.r0_max, "steps": self.steps,
            "controls": dict(sorted(self.controls.items())),
            "branch_tol": self.branch_tol, "n_points": self.n_points,
            "format": self.format, "projection": self.projection,
            "lemmas": list(self.lemmas) if self.lemmas else None,
            "grid_given": self.grid_given,
            "inputs": [str(p) for p in self.inputs],
        }

    def digest(self):
        text = json.dumps(self.key(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def output_dir(self):
        if self.out:
            return Path(self.out)
        base = Path(os.environ.get(OUT_ENV) or "out")
        return base / f"{self.command}-{self.digest()}"


def read_config_file(path):
    """Flat ``key = value`` pairs; ``#`` starts a comment line."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc
    out = {}
    for k, v in parser["run"].items():
        if k not in KEYS:
            raise UsageError(f"unknown config key {k!r} in {path}")
        out[k] = _convert(k, v)
    return out


def _convert(key, value):
    kind = KEYS[key][0]
    try:
        return kind(value)
    except ValueError as exc:
        raise UsageError(f"{key}: cannot parse {value!r} as {kind.__name__}") from exc


def build_parser():
    p = argparse.ArgumentParser(
        prog="cmctori",
        description="Shooting for closed profile curves of CMC hypertori in spheres.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value settings file")
        sp.add_argument("--n", type=int, help="sphere factor dimension, n >= 2")
        sp.add_argument("--H", type=float, help="mean curvature, H <= 0")
        sp.add_argument("--rel-tol", dest="rel_tol", type=float)
        sp.add_argument("--abs-tol", dest="abs_tol", type=float)
        sp.add_argument("--theta-floor", dest="theta_floor", type=float)
        sp.add_argument("--max-arclength", dest="max_arclength", type=float)
        sp.add_argument("--workers", type=int, help="process pool size for grids")
        sp.add_argument("--out", help="output directory (overrides the hashed default)")

    def scanning(sp):
        sp.add_argument("--r0-min", dest="r0_min", type=float)
        sp.add_argument("--r0-max", dest="r0_max", type=float)
        sp.add_argument("--steps", type=int, help="uniform grid size")

    sp = sub.add_parser("solve", help="find both branches and build their closed curves")
    common(sp)
    scanning(sp)
    sp.add_argument("--branch-tol", dest="branch_tol", type=float)
    sp.add_argument("--n-points", dest="n_points", type=int)
    sp.add_argument("--format", choices=("csv", "json", "svg"))
    sp.add_argument("--projection", choices=export.PROJECTIONS)

    sp = sub.add_parser("sweep", help="classify a grid of initial radii")
    common(sp)
    scanning(sp)
    sp.add_argument("--format", choices=("csv", "json"))

    sp = sub.add_parser("verify", help="run the numerical checks and write a JSON report")
    common(sp)
    sp.add_argument("--lemma", action="append", choices=LEMMA_IDS,
                    help="restrict to one check (repeatable)")
    sp.add_argument("--steps", type=int, help="initial radii per grid cell")

    sp = sub.add_parser("render", help="draw curve CSV files (or a fresh solve) as SVG")
    common(sp)
    sp.add_argument("inputs", nargs="*", help="curve CSV files written by solve")
    sp.add_argument("--projection", choices=export.PROJECTIONS)
    sp.add_argument("--n-points", dest="n_points", type=int)
    return p


def resolve(args):
    """Merge defaults, the config file and flags into a :class:`RunConfig`."""
    settings = {k: d for k, (_, d) in KEYS.items()}
    given = set()
    if getattr(args, "config", None):
        file_settings = read_config_file(args.config)
        settings.update(file_settings)
        given |= set(file_settings)
    for k in KEYS:
        v = getattr(args, k, None)
        if k == "lemma" and v is not None:
            v = ",".join(v)
        if v is not None:
            settings[k] = v
            given.add(k)
    lemmas = None
    if settings["lemma"]:
        lemmas = tuple(x.strip() for x in settings["lemma"].split(",") if x.strip())
        bad = [x for x in lemmas if x not in LEMMA_IDS]
        if bad:
            raise UsageError(f"unknown lemma ids {bad}; choose from {list(LEMMA_IDS)}")
    cfg = RunConfig(
        command=args.command,
        n=settings["n"], H=settings["H"],
        r0_min=settings["r0_min"], r0_max=settings["r0_max"], steps=settings["steps"],
        controls={k: settings[k] for k in CONTROL_KEYS if settings[k] is not None},
        branch_tol=settings["branch_tol"], n_points=settings["n_points"],
        format=settings["format"], projection=settings["projection"],
        workers=settings["workers"], lemmas=lemmas, out=settings["out"],
        inputs=tuple(getattr(args, "inputs", ()) or ()),
        grid_given=bool({"n", "H"} & given),
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        params = cfg.params
        cfg.integration_controls()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.command in ("solve", "sweep") and params.H > 0:
        raise UsageError(f"H must be <= 0, got {params.H}")
    a = radius_bound(params)
    if cfg.r0_min is not None and cfg.r0_max is not None and not cfg.r0_min < cfg.r0_max:
        raise UsageError(f"empty range: r0_min={cfg.r0_min} >= r0_max={cfg.r0_max}")
    for name in ("r0_min", "r0_max"):
        v = getattr(cfg, name)
        if v is not None and not 0.0 < v < a:
            raise UsageError(f"{name}={v} outside (0, a(H)={a:.6f})")
    if cfg.steps is not None and cfg.steps < 2:
        raise UsageError("steps must be >= 2")
    if cfg.n_points % 4 or cfg.n_points < 8:
        raise UsageError("n_points must be a multiple of 4, at least 8")
    if cfg.projection not in export.PROJECTIONS:
        raise UsageError(f"projection must be one of {export.PROJECTIONS}")
    if cfg.workers < 1:
        raise UsageError("workers must be >= 1")


def _say(msg):
    print(msg, flush=True)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr, flush=True)


def regime_estimate(n, controls=None):
    """Cheap estimate of the admissible ``|H|``: boundary radii from a coarse
    ``H = 0`` scan, their empirical ``delta``, then :func:`epsilon_bound`."""
    params = Params(n, 0.0)
    lo, hi = default_scan_range(params)
    r1, r2 = boundary_radii(scan(params, lo, hi, REGIME_SCAN_STEPS, controls))
    delta = estimate_delta(n, r1, r2, controls)
    if delta <= 0.0:
        return 0.0
    return epsilon_bound(n, r1, delta)


def _solve_curves(cfg):
    params = cfg.params
    controls = cfg.integration_controls()
    if params.H < 0:
        try:
            eps = regime_estimate(params.n, controls)
        except ShootingError:
            eps = None
        if eps is not None and abs(params.H) >= eps:
            _warn(f"|H|={abs(params.H)} is outside the estimated two-branch regime "
                  f"|H| < {eps:.4g}; results are empirical")
    try:
        branches = find_branches(params, controls, cfg.branch_tol,
                                 steps=cfg.steps or 512, r0_min=cfg.r0_min,
                                 r0_max=cfg.r0_max, workers=cfg.workers)
    except StallEncountered as exc:
        raise StageFailure("shooting", str(exc)) from exc
    except (ShootingError, IntegrationError) as exc:
        raise StageFailure("shooting", str(exc)) from exc
    curves = []
    for b in branches:
        try:
            curves.append(build_closed_profile(b, n_points=cfg.n_points))
        except CurveError as exc:
            raise StageFailure("closure", f"branch rho={b.rho:.10f}: {exc}") from exc
    return branches, curves


def run_solve(cfg):
    branches, curves = _solve_curves(cfg)
    fmt = cfg.format or "csv"
    out = cfg.output_dir()
    files = []
    summary = []
    failures = []
    for i, (b, c) in enumerate(zip(branches, curves), start=1):
        res = cmc_residual(c)
        entry = {
            "branch": i, "rho": b.rho, "s_star": b.s_star,
            "residual_r": b.residual_r, "residual_alpha": b.residual_alpha,
            "bisections": b.bisections, "closure_gap": c.closure_gap,
            "tangent_gap": c.tangent_gap, "simple": c.simple,
            "min_self_distance": c.min_self_distance, "cmc_residual": res,
        }
        summary.append(entry)
        _say(f"branch {i}: rho={b.rho:.10f} s*={b.s_star:.6f} "
             f"closure={c.closure_gap:.2e} simple={c.simple} cmc_residual={res:.2e}")
        if not c.simple:
            failures.append(f"simplicity: branch {i} self-intersects")
        if res >= CMC_TOL:
            _warn(f"branch {i} CMC residual {res:.2e} >= {CMC_TOL:.0e}")
        if fmt in ("csv", "json"):
            name = f"branch{i}.{fmt}"
            export.write_curve(c, out / name, fmt)
            files.append(name)
    if fmt == "svg":
        export.write_text(export.render_svg(curves, cfg.projection,
                                            [f"rho={b.rho:.6f}" for b in branches]),
                          out / "profiles.svg")
        files.append("profiles.svg")
    doc = export.versioned("solve_summary", {
        "config": cfg.key(), "branches": summary, "files": files,
        "projection": cfg.projection if fmt == "svg" else None,
        "passed": not failures, "failures": failures,
    })
    export.write_json(doc, out / "summary.json")
    _say(f"wrote {out}")
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def run_sweep(cfg):
    params = cfg.params
    lo, hi = default_scan_range(params)
    lo = cfg.r0_min if cfg.r0_min is not None else lo
    hi = cfg.r0_max if cfg.r0_max is not None else hi
    if not lo < hi:
        raise UsageError(f"empty range: r0_min={lo} >= r0_max={hi}")
    try:
        result = scan(params, lo, hi, cfg.steps or 200, cfg.integration_controls(),
                      workers=cfg.workers)
    except (ShootingError, IntegrationError) as exc:
        raise StageFailure("sweep", str(exc)) from exc
    out = cfg.output_dir()
    if (cfg.format or "csv") == "json":
        export.write_json(export.sweep_document(result), out / "sweep.json")
    else:
        export.write_text(export.sweep_csv(result), out / "sweep.csv")
        export.write_text(export.brackets_csv(result), out / "brackets.csv")
    _say(f"{len(result.grid)} radii, {len(result.brackets)} brackets")
    for b in result.brackets:
        _say(f"bracket [{b[0]:.10f}, {b[1]:.10f}]")
    _say(f"wrote {out}")
    return EXIT_OK


def run_verify(cfg):
    kwargs = {}
    if cfg.grid_given:
        kwargs.update(ns=(cfg.n,), Hs=(cfg.H,))
    if cfg.steps:
        kwargs["r0_points"] = cfg.steps
    try:
        reports = run_suite(controls=cfg.integration_controls(), lemmas=cfg.lemmas,
                            workers=cfg.workers, **kwargs)
    except (ShootingError, IntegrationError) as exc:
        raise StageFailure("verify", str(exc)) from exc
    doc = export.report_document(reports, cfg.key())
    out = cfg.output_dir()
    export.write_json(doc, out / "report.json")
    for r in reports.values():
        wm = "none" if r.worst_margin == float("inf") else f"{r.worst_margin:.3e}"
        _say(f"{'PASS' if r.passed else 'FAIL'} {r.lemma_id}: {r.cases_passed}/{r.cases_run}"
             f" passed, {r.vacuous} vacuous, worst margin {wm}")
    _say(f"wrote {out / 'report.json'}")
    if doc["failing"]:
        print(f"error: failing checks: {', '.join(doc['failing'])}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def run_render(cfg):
    if cfg.inputs:
        curves = []
        for path in cfg.inputs:
            try:
                rows = export.read_curve_csv(path)
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot read curve {path}: {exc}") from exc
            curves.append(rows[:, 1:3])
        labels = [Path(p).stem for p in cfg.inputs]
    else:
        branches, curves = _solve_curves(cfg)
        labels = [f"rho={b.rho:.6f}" for b in branches]
    out = cfg.output_dir()
    path = export.write_text(export.render_svg(curves, cfg.projection, labels),
                             out / "profiles.svg")
    _say(f"wrote {path}")
    return EXIT_OK


RUNNERS = {"solve": run_solve, "sweep": run_sweep, "verify": run_verify, "render": run_render}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return RUNNERS[cfg.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except export.ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
