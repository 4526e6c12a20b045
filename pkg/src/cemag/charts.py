"""Static SVG bar charts for diagnostics reports.

Pure string generation, no plotting dependency. Every bar carries
``data-series``, ``data-category`` and ``data-value`` attributes so charts
can be checked against the report they were drawn from.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .harness import DiagnosticsReport, write_manifest

__all__ = ["grouped_bar_chart", "emit_svg_charts", "PLOT_HEIGHT"]

PALETTE = ["#1f77b4", "#c46c2c", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]
PLOT_HEIGHT = 220.0
_TOP = 40.0
_LEFT = 60.0
_BOTTOM = 50.0
_GROUP_WIDTH = 90.0


def _nice_max(v: float) -> float:
    if not v > 0 or not math.isfinite(v):
        return 1.0
    exp = math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * 10**exp >= v:
            return m * 10**exp
    return 10 ** (exp + 1)


def _num(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".") if v == v else "0"


def _panel(categories, series, values, *, x0, title, ylabel, ymax=None):
    """SVG elements for one bar panel; returns (elements, width)."""
    finite = [v for row in values for v in row if v is not None and math.isfinite(v)]
    ymax = ymax if ymax is not None else _nice_max(max(finite, default=0.0))
    n_series = max(1, len(series))
    bar_w = (_GROUP_WIDTH - 20) / n_series
    width = _LEFT + _GROUP_WIDTH * max(1, len(categories)) + 20
    base_y = _TOP + PLOT_HEIGHT
    out = [
        f'<g class="panel" data-ymax="{ymax!r}" transform="translate({_num(x0)},0)">',
        f'<text x="{_num(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_num(_LEFT)}" y1="{_num(base_y)}" x2="{_num(width - 10)}" y2="{_num(base_y)}" stroke="#333"/>',
        f'<line x1="{_num(_LEFT)}" y1="{_num(_TOP)}" x2="{_num(_LEFT)}" y2="{_num(base_y)}" stroke="#333"/>',
        f'<text x="14" y="{_num(_TOP + PLOT_HEIGHT / 2)}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 14 {_num(_TOP + PLOT_HEIGHT / 2)})">{escape(ylabel)}</text>',
    ]
    for t in range(5):
        frac = t / 4
        y = base_y - frac * PLOT_HEIGHT
        out.append(f'<text x="{_num(_LEFT - 6)}" y="{_num(y + 4)}" font-size="10" text-anchor="end">'
                   f'{_num(frac * ymax)}</text>')
    for ci, cat in enumerate(categories):
        gx = _LEFT + 10 + ci * _GROUP_WIDTH
        for si, name in enumerate(series):
            v = values[ci][si]
            if v is None or not math.isfinite(v):
                continue
            h = min(v, ymax) / ymax * PLOT_HEIGHT
            out.append(
                f'<rect class="bar" x="{_num(gx + si * bar_w)}" y="{_num(base_y - h)}" width="{_num(bar_w - 2)}" '
                f'height="{_num(h)}" fill="{PALETTE[si % len(PALETTE)]}" data-series={quoteattr(str(name))} '
                f'data-category={quoteattr(str(cat))} data-value="{v!r}"/>'
            )
        out.append(f'<text x="{_num(gx + (_GROUP_WIDTH - 20) / 2)}" y="{_num(base_y + 16)}" font-size="11" '
                   f'text-anchor="middle">{escape(str(cat))}</text>')
    for si, name in enumerate(series):
        lx = _LEFT + si * 110
        ly = base_y + 34
        out.append(f'<rect x="{_num(lx)}" y="{_num(ly - 9)}" width="10" height="10" '
                   f'fill="{PALETTE[si % len(PALETTE)]}"/>')
        out.append(f'<text x="{_num(lx + 14)}" y="{_num(ly)}" font-size="11">{escape(str(name))}</text>')
    out.append("</g>")
    return out, width


def _svg(parts, width) -> str:
    height = _TOP + PLOT_HEIGHT + _BOTTOM
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{_num(width)}" height="{_num(height)}" fill="white"/>', *parts,
                      "</svg>"]) + "\n"


def grouped_bar_chart(categories, series, values, *, title="", ylabel="", ymax=None) -> str:
    """One grouped bar chart; ``values[i][j]`` is series ``j`` in category ``i``."""
    parts, width = _panel(categories, series, values, x0=0, title=title, ylabel=ylabel, ymax=ymax)
    return _svg(parts, width)


def paired_bar_chart(panels) -> str:
    """Several panels side by side; each panel is a dict of ``grouped_bar_chart`` arguments."""
    parts, x = [], 0.0
    for p in panels:
        elems, w = _panel(p["categories"], p["series"], p["values"], x0=x, title=p.get("title", ""),
                          ylabel=p.get("ylabel", ""), ymax=p.get("ymax"))
        parts.extend(elems)
        x += w
    return _svg(parts, x)


_METRIC_CHARTS = [
    ("ce_fraction.svg", "fraction_mean", "Share of CE needed per true-positive instance", "fraction of CE", 1.0),
    ("class_coverage.svg", "coverage", "Unique top-k CE indices per class", "fraction of CE", 1.0),
    ("contribution_share.svg", "share_mean", "Contribution of the top CE", "share of supporting CE", 1.0),
]


def emit_svg_charts(report: DiagnosticsReport, out_dir) -> dict:
    """Write metric charts (x = method, bars = class) plus per-class frequency/magnitude charts.

    Frequency/magnitude charts use split 0. Returns the updated manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    methods = report.methods
    if not methods or not report.classes:
        return write_manifest(out, names)
    for fname, metric, title, ylabel, ymax in _METRIC_CHARTS:
        table = report.summary(metric)
        classes = sorted({c for m in table.values() for c in m}, key=int)
        values = [[table.get(m, {}).get(c) for c in classes] for m in methods]
        svg = grouped_bar_chart(methods, [f"class {c}" for c in classes], values, title=title, ylabel=ylabel,
                                ymax=ymax)
        (out / fname).write_text(svg, encoding="utf-8")
        names.append(fname)
    rows = [r for r in report.freq_mag if r["split"] == 0]
    keys = sorted({(r["method"], int(r["class"])) for r in rows}, key=lambda k: (methods.index(k[0]), k[1]))
    for method, cls in keys:
        sel = sorted((r for r in rows if r["method"] == method and int(r["class"]) == cls), key=lambda r: r["rank"])
        cats = [str(r["feature_index"]) for r in sel]
        svg = paired_bar_chart([
            {"categories": cats, "series": ["frequency"], "values": [[r["frequency"]] for r in sel],
             "title": f"{method}, class {cls}: frequency", "ylabel": "train TP instances"},
            {"categories": cats, "series": ["mean magnitude"], "values": [[r["mean_magnitude"]] for r in sel],
             "title": f"{method}, class {cls}: mean |CE|", "ylabel": "mean magnitude"},
        ])
        fname = f"freq_mag_{method}_class{cls}.svg"
        (out / fname).write_text(svg, encoding="utf-8")
        names.append(fname)
    return write_manifest(out, names)
