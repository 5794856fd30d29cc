"""CSV, JSON and SVG writers for profile curves, sweeps and check reports.

All writers are deterministic: no timestamps, fixed float formatting, sorted
keys in JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .curve import embed
from .ode_core import HALF_PI

SCHEMA_VERSION = 1
CURVE_COLUMNS = ("s", "r", "theta", "alpha", "x", "y", "z")
SWEEP_COLUMNS = ("r0", "outcome", "r", "theta", "alpha", "s_star")
FLOAT_FMT = "%.17g"

SVG_WIDTH = 800
SVG_HEIGHT = 600
SVG_MARGIN = 60
BRANCH_COLORS = ("red", "green")
PROJECTIONS = ("rtheta", "xy")


class ExportError(OSError):
    pass


def _write_text(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _fmt(x):
    return FLOAT_FMT % x


def curve_rows(curve):
    xyz = embed(curve.r, curve.theta)
    return np.column_stack([curve.points, xyz])


def curve_csv(curve):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in curve_rows(curve):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_curve_csv(path):
    """Rows of a curve CSV as an array with columns :data:`CURVE_COLUMNS`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CURVE_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return np.array(rows[1:], dtype=float).reshape(-1, len(CURVE_COLUMNS))


def to_json(obj):
    """Canonical JSON text; non-finite floats are written as null."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def versioned(kind, body):
    return dict(body, schema_version=SCHEMA_VERSION, kind=kind)


def curve_document(curve):
    return versioned("profile_curve", {
        "n": curve.params.n,
        "H": curve.params.H,
        "rho": curve.rho,
        "quarter_length": curve.quarter_length,
        "columns": list(CURVE_COLUMNS),
        "rows": curve_rows(curve),
    })


def report_document(reports, config=None):
    reports = list(reports.values()) if isinstance(reports, dict) else list(reports)
    return versioned("lemma_reports", {
        "config": config or {},
        "passed": all(r.passed for r in reports),
        "failing": [r.lemma_id for r in reports if not r.passed],
        "reports": [r.to_dict() for r in reports],
    })


def sweep_rows(scan_result):
    return [
        [r0, str(kind), st.r, st.theta, st.alpha, st.s]
        for r0, kind, st in scan_result.grid
    ]


def sweep_csv(scan_result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in sweep_rows(scan_result):
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


def brackets_csv(scan_result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("r0_lo", "r0_hi"))
    for lo, hi in scan_result.brackets:
        w.writerow((_fmt(lo), _fmt(hi)))
    return buf.getvalue()


def sweep_document(scan_result):
    p = scan_result.params
    return versioned("sweep", {
        "n": p.n,
        "H": p.H,
        "columns": list(SWEEP_COLUMNS),
        "rows": sweep_rows(scan_result),
        "brackets": [list(b) for b in scan_result.brackets],
    })


# ---------------------------------------------------------------- SVG

def _project(rtheta, projection):
    rtheta = np.asarray(rtheta, dtype=float)
    if projection == "rtheta":
        return rtheta
    if projection == "xy":
        return embed(rtheta[:, 0], rtheta[:, 1])[:, :2]
    raise ValueError(f"unknown projection {projection!r}; use one of {PROJECTIONS}")


def _frame(projection):
    """Data rectangle ``(x0, x1, y0, y1)``, axis labels and tick values."""
    if projection == "rtheta":
        xt = [0.0, 0.25 * math.pi, HALF_PI, 0.75 * math.pi, math.pi]
        yt = [0.0, 0.125 * math.pi, 0.25 * math.pi, 0.375 * math.pi, HALF_PI]
        return (0.0, math.pi, 0.0, HALF_PI), ("r", "theta"), xt, yt
    t = [0.0, 0.25, 0.5, 0.75, 1.0]
    return (0.0, 1.0, 0.0, 1.0), ("sin r cos theta", "sin r sin theta"), t, t


def render_svg(curves, projection="rtheta", labels=None):
    """One SVG with each curve as a ``<path>``, in branch order.

    ``curves`` holds ``(N, 2)`` arrays of ``(r, theta)`` or objects with an
    ``rtheta()`` method. Axes use ``<line>`` and ``<text>`` only, so the
    document contains exactly one ``<path>`` per curve.
    """
    (x0, x1, y0, y1), (xl, yl), xt, yt = _frame(projection)
    w, h, m = SVG_WIDTH, SVG_HEIGHT, SVG_MARGIN

    def X(v):
        return m + (v - x0) / (x1 - x0) * (w - 2 * m)

    def Y(v):
        return h - m - (v - y0) / (y1 - y0) * (h - 2 * m)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        '<g stroke="black" stroke-width="1">',
        f'<line x1="{X(x0):.2f}" y1="{Y(y0):.2f}" x2="{X(x1):.2f}" y2="{Y(y0):.2f}"/>',
        f'<line x1="{X(x0):.2f}" y1="{Y(y0):.2f}" x2="{X(x0):.2f}" y2="{Y(y1):.2f}"/>',
    ]
    for v in xt:
        out.append(f'<line x1="{X(v):.2f}" y1="{Y(y0):.2f}" '
                   f'x2="{X(v):.2f}" y2="{Y(y0) + 5:.2f}"/>')
    for v in yt:
        out.append(f'<line x1="{X(x0) - 5:.2f}" y1="{Y(v):.2f}" '
                   f'x2="{X(x0):.2f}" y2="{Y(v):.2f}"/>')
    out.append("</g>")
    out.append('<g font-family="sans-serif" font-size="12" fill="black">')
    for v in xt:
        out.append(f'<text x="{X(v):.2f}" y="{Y(y0) + 18:.2f}" '
                   f'text-anchor="middle">{v:.3f}</text>')
    for v in yt:
        out.append(f'<text x="{X(x0) - 8:.2f}" y="{Y(v) + 4:.2f}" '
                   f'text-anchor="end">{v:.3f}</text>')
    out.append(f'<text x="{w / 2:.2f}" y="{h - 15:.2f}" text-anchor="middle">{xl}</text>')
    out.append(f'<text x="15" y="{h / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {h / 2:.2f})">{yl}</text>')
    out.append("</g>")
    for i, c in enumerate(curves):
        pts = _project(c.rtheta() if hasattr(c, "rtheta") else c, projection)
        d = "M " + " L ".join(f"{X(a):.3f} {Y(b):.3f}" for a, b in pts) + " Z"
        color = BRANCH_COLORS[i % len(BRANCH_COLORS)]
        title = f"<title>{labels[i]}</title>" if labels else ""
        out.append(f'<path fill="none" stroke="{color}" stroke-width="1.5" d="{d}">{title}</path>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_curve(curve, path, fmt):
    if fmt == "csv":
        return _write_text(path, curve_csv(curve))
    if fmt == "json":
        return _write_text(path, to_json(curve_document(curve)))
    raise ValueError(f"curve format must be csv or json, got {fmt!r}")


def write_json(obj, path):
    return _write_text(path, to_json(obj))


def write_text(text, path):
    return _write_text(path, text)
