"""Minimal SVG line plots rendered from emitted CSV files."""
from __future__ import annotations

import csv
import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 640, 400, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: [float(r[i]) for r in body] for i, name in enumerate(header)}


def _scale(vals, log):
    vals = [math.log10(v) if log else v for v in vals if (v > 0 or not log) and math.isfinite(v)]
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def line_plot(series, path, title="", xlabel="", ylabel="", logx=False, logy=False):
    """Write ``series`` (label -> (xs, ys)) as an SVG polyline chart."""
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    x0, x1 = _scale(xs_all, logx)
    y0, y1 = _scale(ys_all, logy)

    def px(x):
        x = math.log10(x) if logx else x
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y):
        y = math.log10(y) if logy else y
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
           'fill="none" stroke="#444"/>',
           f'<text x="{WIDTH / 2}" y="{PAD / 2}" text-anchor="middle">{escape(title)}</text>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>']
    for value, anchor, pos in ((x0, "start", PAD), (x1, "end", WIDTH - PAD)):
        lab = f"1e{value:.2g}" if logx else f"{value:.4g}"
        out.append(f'<text x="{pos}" y="{HEIGHT - PAD + 16}" text-anchor="{anchor}">{lab}</text>')
    for value, pos in ((y0, HEIGHT - PAD), (y1, PAD + 10)):
        lab = f"1e{value:.2g}" if logy else f"{value:.4g}"
        out.append(f'<text x="{PAD - 4}" y="{pos}" text-anchor="end">{lab}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys)
                       if math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx) and (y > 0 or not logy))
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - PAD - 4}" y="{PAD + 16 * (i + 1)}" text-anchor="end" '
                   f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def plot_csv(csv_path, svg_path, x, ys, **kw):
    """Plot columns ``ys`` of ``csv_path`` against column ``x``."""
    cols = read_columns(csv_path)
    line_plot({y: (cols[x], cols[y]) for y in ys}, svg_path, xlabel=x, **kw)
