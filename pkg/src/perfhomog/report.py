"""CSV and standalone SVG output."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PROBE_HEADER = "epsilon,x0x,x0y,r,avg_grad,ratio,H_excess,cacc_ratio"
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _g(x) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.17g}"


def write_probe_csv(reports, path) -> None:
    with open(path, "w") as fh:
        fh.write(PROBE_HEADER + "\n")
        for rep in reports:
            for row in rep.to_rows():
                fh.write(",".join(_g(v) for v in row) + "\n")


def loglog_svg(series, path, title="", xlabel="", ylabel="", width=640, height=440) -> None:
    """Write a log-log plot; ``series`` holds dicts with ``x``, ``y``, ``label`` and optional ``dash``/``marker``."""
    xs = np.concatenate([np.asarray(s["x"], float) for s in series])
    ys = np.concatenate([np.asarray(s["y"], float) for s in series])
    ok = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    if not ok.any():
        xs, ys = np.array([1.0, 10.0]), np.array([1.0, 10.0])
    else:
        xs, ys = xs[ok], ys[ok]
    lx0, lx1 = math.floor(np.log10(xs.min()) * 4) / 4, math.ceil(np.log10(xs.max()) * 4) / 4
    ly0, ly1 = math.floor(np.log10(ys.min()) * 4) / 4, math.ceil(np.log10(ys.max()) * 4) / 4
    if lx1 <= lx0:
        lx1 = lx0 + 1
    if ly1 <= ly0:
        ly1 = ly0 + 1
    ml, mr, mt, mb = 70, 150, 40, 55
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (math.log10(x) - lx0) / (lx1 - lx0) * pw

    def py(y):
        return mt + (ly1 - math.log10(y)) / (ly1 - ly0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(math.ceil(lx0), math.floor(lx1) + 1):
        x = px(10.0**k)
        out.append(f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle">1e{k}</text>')
    for k in range(math.ceil(ly0), math.floor(ly1) + 1):
        y = py(10.0**k)
        out.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">1e{k}</text>')
    for i, s in enumerate(series):
        color = s.get("color", _COLORS[i % len(_COLORS)])
        pts = [(px(x), py(y)) for x, y in zip(s["x"], s["y"])
               if x > 0 and y > 0 and np.isfinite(x) and np.isfinite(y)]
        if not pts:
            continue
        dash = ' stroke-dasharray="6,4"' if s.get("dash") else ""
        poly = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.get("marker", True):
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>' for a, b in pts)
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(s.get("label", ""))}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def sweep_svg(record, path) -> None:
    eps = np.asarray(record.epsilons, float)
    err = np.asarray(record.errors, float)
    series = [{"x": eps, "y": err, "label": "H1 error"}]
    if np.isfinite(record.slope):
        series.append({"x": eps, "y": np.exp(record.intercept) * eps**record.slope,
                       "label": f"fit, slope {record.slope:.3f}", "marker": False})
    if len(eps) and err[0] > 0:
        series.append({"x": eps, "y": err[0] * (eps / eps[0]) ** 0.5, "label": "slope 1/2",
                       "dash": True, "marker": False})
    loglog_svg(series, path, title="Convergence sweep", xlabel="epsilon", ylabel="H1 error")


def probe_svg(reports, path) -> None:
    series = [{"x": rep.radii, "y": rep.ratios, "label": f"eps = {rep.eps:g}"} for rep in reports]
    loglog_svg(series, path, title="Averaged gradient ratio", xlabel="r", ylabel="ratio to B(x0, R)")
