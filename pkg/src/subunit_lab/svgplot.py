"""Minimal self-contained SVG output: line charts, log-log charts, heatmaps.

No plotting dependency; every figure is a standalone .svg written directly.
Deterministic output for identical data (floats formatted with repr-stable
%.6g, no timestamps).
"""

import math

import numpy as np

W, H = 640, 440
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W/2:.0f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>',
            f'<text x="{W/2:.0f}" y="{H-8:.0f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>',
            f'<text x="14" y="{H/2:.0f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 14 {H/2:.0f})">{ylabel}</text>',
        ]

    def axes(self, xlo, xhi, ylo, yhi, xlog=False, ylog=False):
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.xlog, self.ylog = xlog, ylog
        self.parts.append(
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{W-2*MARGIN}" '
            f'height="{H-2*MARGIN}" fill="none" stroke="#444"/>')
        for t in _ticks(xlo, xhi):
            px = self.px(t if not xlog else 10 ** t)
            self.parts.append(
                f'<line x1="{px:.1f}" y1="{H-MARGIN}" x2="{px:.1f}" '
                f'y2="{H-MARGIN+4}" stroke="#444"/>')
            label = f"{10**t:.3g}" if xlog else f"{t:.3g}"
            self.parts.append(
                f'<text x="{px:.1f}" y="{H-MARGIN+18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{label}</text>')
        for t in _ticks(ylo, yhi):
            py = self.py(t if not ylog else 10 ** t)
            self.parts.append(
                f'<line x1="{MARGIN-4}" y1="{py:.1f}" x2="{MARGIN}" '
                f'y2="{py:.1f}" stroke="#444"/>')
            label = f"{10**t:.3g}" if ylog else f"{t:.3g}"
            self.parts.append(
                f'<text x="{MARGIN-6}" y="{py+3:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{label}</text>')

    def px(self, x):
        v = math.log10(x) if self.xlog else x
        return MARGIN + (v - self.xlo) / (self.xhi - self.xlo) * (W - 2 * MARGIN)

    def py(self, y):
        v = math.log10(y) if self.ylog else y
        return H - MARGIN - (v - self.ylo) / (self.yhi - self.ylo) * (H - 2 * MARGIN)

    def polyline(self, xs, ys, color, label=None, idx=0):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}"
                       for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{self.px(x):.2f}" '
                              f'cy="{self.py(y):.2f}" r="2.5" fill="{color}"/>')
        if label:
            y0 = MARGIN + 14 + 14 * idx
            self.parts.append(
                f'<line x1="{W-MARGIN-110}" y1="{y0-4}" x2="{W-MARGIN-90}" '
                f'y2="{y0-4}" stroke="{color}" stroke-width="2"/>')
            self.parts.append(
                f'<text x="{W-MARGIN-85}" y="{y0}" font-family="sans-serif" '
                f'font-size="11">{label}</text>')

    def tostring(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _finite_positive(series, log):
    vals = []
    for _, xs, ys in series:
        for x, y in zip(xs, ys):
            if np.isfinite(x) and np.isfinite(y) and (not log or (x > 0 and y > 0)):
                vals.append((x, y))
    return vals


def line_chart(path, series, title="", xlabel="", ylabel="",
               xlog=False, ylog=False):
    """series: list of (label, xs, ys).  Writes a standalone SVG."""
    pts = _finite_positive(series, xlog or ylog)
    if not pts:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    tx = (lambda v: math.log10(v)) if xlog else (lambda v: v)
    ty = (lambda v: math.log10(v)) if ylog else (lambda v: v)
    xlo, xhi = min(map(tx, xs)), max(map(tx, xs))
    ylo, yhi = min(map(ty, ys)), max(map(ty, ys))
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    padx, pady = 0.05 * (xhi - xlo), 0.08 * (yhi - ylo)
    c = _Canvas(title, xlabel, ylabel)
    c.axes(xlo - padx, xhi + padx, ylo - pady, yhi + pady, xlog, ylog)
    for k, (label, sx, sy) in enumerate(series):
        keep = [(x, y) for x, y in zip(sx, sy)
                if np.isfinite(x) and np.isfinite(y)
                and (not xlog or x > 0) and (not ylog or y > 0)]
        if keep:
            c.polyline([p[0] for p in keep], [p[1] for p in keep],
                       PALETTE[k % len(PALETTE)], label, k)
    with open(path, "w") as fh:
        fh.write(c.tostring())


def heatmap(path, values, grid, title="", mask=None, cells=160):
    """Coarse rect-based heatmap of a grid function (downsampled)."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    if mask is not None:
        finite &= mask
    if not finite.any():
        raise ValueError("nothing to plot")
    lo, hi = float(v[finite].min()), float(v[finite].max())
    span = hi - lo if hi > lo else 1.0
    nx, ny = v.shape
    sx = max(1, nx // cells)
    sy = max(1, ny // cells)
    vv = v[::sx, ::sy]
    ff = finite[::sx, ::sy]
    mx, my = vv.shape
    cw = (W - 2 * MARGIN) / mx
    ch = (H - 2 * MARGIN) / my
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    for i in range(mx):
        for j in range(my):
            if not ff[i, j]:
                continue
            t = (vv[i, j] - lo) / span
            rch = int(255 * t)
            bch = int(255 * (1 - t))
            x = MARGIN + i * cw
            y = H - MARGIN - (j + 1) * ch
            parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" '
                         f'height="{ch + 0.5:.2f}" fill="rgb({rch},80,{bch})"/>')
    parts.append(f'<text x="{MARGIN}" y="{H - 20}" font-family="sans-serif" '
                 f'font-size="10">range [{lo:.4g}, {hi:.4g}]</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def nesting_diagram(path, supports, grid, title="cutoff supports"):
    """Nested support outlines E_1 > E_2 > ... as stacked translucent fills."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    nx, ny = grid.shape
    cw = (W - 2 * MARGIN) / nx
    ch = (H - 2 * MARGIN) / ny
    for k, m in enumerate(supports):
        color = PALETTE[k % len(PALETTE)]
        step = max(1, nx // 120)
        for i in range(0, nx, step):
            for j in range(0, ny, step):
                if m[i, j]:
                    x = MARGIN + i * cw
                    y = H - MARGIN - (j + 1) * ch
                    parts.append(
                        f'<rect x="{x:.2f}" y="{y:.2f}" '
                        f'width="{cw * step:.2f}" height="{ch * step:.2f}" '
                        f'fill="{color}" fill-opacity="0.18"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
