"""Table, fusion-report and SVG writers.

All numbers are written with fixed formats so reruns produce byte-identical
files. SVG is emitted as plain text; curves are drawn in data coordinates
inside a transformed group, so the ``points`` attribute of every polyline
holds the plotted values directly.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .fusion import KdeModel, kde_eval

CURVE_POINTS = 512

TABLE_COLUMNS = (
    "distribution",
    "feature",
    "norm_accuracy",
    "norm_fpr",
    "norm_fnr",
    "norm_auc",
    "fusion_accuracy",
    "fusion_fpr",
    "fusion_fnr",
    "fusion_auc",
)


@dataclass
class ReportBundle:
    """Paths and in-memory content of one pipeline report."""

    table_csv: str
    fusion_report: str
    density_svgs: dict = field(default_factory=dict)  # feature name -> path
    roc_svg: str | None = None
    rows: list = field(default_factory=list)
    fusion: dict = field(default_factory=dict)  # feature name -> fusion entry
    paired: dict = field(default_factory=dict)  # feature name -> PairedMetrics


def _f(v):
    return "nan" if v is None or not math.isfinite(v) else f"{v:.6f}"


def table_rows(results):
    """``results``: iterable of ``(distribution, feature, PairedMetrics)``."""
    rows = []
    for dist, name, pm in results:
        a, b = pm.normalization, pm.fusion
        rows.append(
            [dist, name]
            + [_f(v) for v in (a.accuracy, a.fpr, a.fnr, a.auc, b.accuracy, b.fpr, b.fnr, b.auc)]
        )
    return rows


def write_table_csv(rows, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    w.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def read_table_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def fusion_entry(params, report, truth=None):
    entry = {"C": float(params.C), "D": float(params.D)}
    entry.update(report.to_dict())
    if truth is not None:
        entry["truth"] = {"C": float(truth.C), "D": float(truth.D)}
    return entry


def write_fusion_report(entries, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


# SVG

def _fmt(v):
    return f"{v:.6g}"


def _polyline(xs, ys, color, extra=""):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return (
        f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" '
        f'vector-effect="non-scaling-stroke"{extra}/>'
    )


def density_grid(models, n=CURVE_POINTS):
    lo = min(float(m.points.min()) - 3 * m.bandwidth for m in models)
    hi = max(float(m.points.max()) + 3 * m.bandwidth for m in models)
    return np.linspace(lo, hi, n)


def density_curves(pair, grid):
    """Evaluate both models of ``pair`` on ``grid``."""
    return tuple(kde_eval(m, grid) for m in pair)


_COLORS = ("#1f77b4", "#d62728")


def _density_panel(x0, y0, w, h, title, grid, curves, labels, ymax):
    xmin, xmax = float(grid[0]), float(grid[-1])
    sx = w / (xmax - xmin)
    sy = h / ymax
    out = [f'<g class="panel" data-title="{escape(title)}">']
    out.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000"/>')
    out.append(f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 32}" text-anchor="middle">feature value</text>')
    out.append(
        f'<text x="{x0 - 36}" y="{y0 + h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 {x0 - 36} {y0 + h / 2})">density</text>'
    )
    out.append(f'<text x="{x0}" y="{y0 + h + 16}" text-anchor="middle">{_fmt(xmin)}</text>')
    out.append(f'<text x="{x0 + w}" y="{y0 + h + 16}" text-anchor="middle">{_fmt(xmax)}</text>')
    out.append(f'<text x="{x0 - 4}" y="{y0 + 4}" text-anchor="end">{_fmt(ymax)}</text>')
    out.append(
        f'<g class="curves" transform="translate({x0} {y0 + h}) scale({_fmt(sx)} {_fmt(-sy)}) '
        f'translate({_fmt(-xmin)} 0)">'
    )
    for k, (c, lab) in enumerate(zip(curves, labels)):
        out.append(_polyline(grid, c, _COLORS[k % 2], f' data-label="{escape(lab)}"'))
    out.append("</g>")
    for k, lab in enumerate(labels):
        ly = y0 + 16 + 16 * k
        out.append(f'<line x1="{x0 + w - 110}" y1="{ly - 4}" x2="{x0 + w - 95}" y2="{ly - 4}" stroke="{_COLORS[k % 2]}"/>')
        out.append(f'<text x="{x0 + w - 90}" y="{ly}">{escape(lab)}</text>')
    out.append("</g>")
    return out


def render_density_svg(before, after, path, title="", labels=("reference", "source")):
    """Two panels of KDE curves: ``before`` and ``after`` fusion.

    ``before`` and ``after`` are ``(KdeModel, KdeModel)`` pairs; each curve is
    sampled at 512 points on a grid shared by both panels.
    """
    for m in (*before, *after):
        if not isinstance(m, KdeModel):
            raise TypeError("density panels need KdeModel pairs")
    grid = density_grid((*before, *after))
    cb, ca = density_curves(before, grid), density_curves(after, grid)
    ymax = max(float(np.max(c)) for c in (*cb, *ca)) * 1.05 or 1.0
    w, h, pad = 360, 240, 60
    width, height = 2 * w + 3 * pad, h + 2 * pad + 20
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title or 'feature densities')}</title>",
    ]
    out += _density_panel(pad, pad, w, h, "before fusion", grid, cb, labels, ymax)
    out += _density_panel(2 * pad + w, pad, w, h, "after fusion", grid, ca, labels, ymax)
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def render_roc_svg(curves, path, title="ROC"):
    """Overlay labelled ROC curves with the chance diagonal.

    ``curves`` is a sequence of ``(label, RocCurve)``; the legend shows each
    AUC to three decimals.
    """
    w = h = 320
    pad = 60
    width, height = w + 2 * pad + 160, h + 2 * pad
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="#000"/>',
        f'<text x="{pad + w / 2}" y="{pad + h + 36}" text-anchor="middle">false positive rate</text>',
        f'<text x="{pad - 36}" y="{pad + h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 {pad - 36} {pad + h / 2})">true positive rate</text>',
        f'<text x="{pad}" y="{pad + h + 16}" text-anchor="middle">0</text>',
        f'<text x="{pad + w}" y="{pad + h + 16}" text-anchor="middle">1</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end">1</text>',
        f'<g class="curves" transform="translate({pad} {pad + h}) scale({w} {-h})">',
        '<polyline class="chance" points="0,0 1,1" fill="none" stroke="#888" '
        'stroke-dasharray="4 3" vector-effect="non-scaling-stroke"/>',
    ]
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    for k, (label, roc) in enumerate(curves):
        out.append(_polyline(roc.fpr, roc.tpr, palette[k % len(palette)], f' data-label="{escape(label)}"'))
    out.append("</g>")
    for k, (label, roc) in enumerate(curves):
        ly = pad + 16 + 18 * k
        c = palette[k % len(palette)]
        out.append(f'<line x1="{pad + w + 12}" y1="{ly - 4}" x2="{pad + w + 30}" y2="{ly - 4}" stroke="{c}"/>')
        out.append(f'<text class="legend" x="{pad + w + 34}" y="{ly}">{escape(label)} (AUC = {roc.auc:.3f})</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def polyline_points(svg_text, label=None):
    """Parse polyline coordinates back out of an SVG written by this module."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg_text)
    out = []
    for el in root.iter("{http://www.w3.org/2000/svg}polyline"):
        if label is not None and el.get("data-label") != label:
            continue
        pts = [tuple(float(v) for v in p.split(",")) for p in el.get("points").split()]
        out.append(np.asarray(pts))
    return out
