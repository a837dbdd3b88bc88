"""Static SVG charts rendered from simulation artifacts.

Hand-rolled renderer: a fixed canvas, nice-number axes, polyline series, and
optional dashed horizontal guide lines. Output is a pure function of the
input data, so rerendering a stored run reproduces identical bytes.
"""
from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#17becf", "#8c564b", "#7f7f7f"]

WIDTH, HEIGHT = 860, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 46

PLOT_KINDS = ("trajectories", "error", "pairwise", "ordering", "inputs",
              "clearances")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-12 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks or [lo]


class Chart:
    """One xy chart with labelled series and dashed guide lines."""

    def __init__(self, title: str, xlabel: str, ylabel: str,
                 equal_axes: bool = False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.equal_axes = equal_axes
        self.series: list = []
        self.hlines: list = []
        self.circles: list = []

    def add_series(self, label: str, xs: Sequence[float], ys: Sequence[float],
                   color: Optional[str] = None) -> None:
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys):
            raise ValueError("series length mismatch")
        color = color or PALETTE[len(self.series) % len(PALETTE)]
        self.series.append((label, xs, ys, color))

    def add_hline(self, y: float, label: str = "", color: str = "#d62728") -> None:
        self.hlines.append((float(y), label, color))

    def add_circle(self, cx: float, cy: float, radius: float,
                   color: str = "#555555") -> None:
        self.circles.append((float(cx), float(cy), float(radius), color))

    def _bounds(self) -> tuple:
        xs = [v for _, sx, _, _ in self.series for v in sx]
        ys = [v for _, _, sy, _ in self.series for v in sy]
        ys += [y for y, _, _ in self.hlines]
        for cx, cy, rr, _ in self.circles:
            xs += [cx - rr, cx + rr]
            ys += [cy - rr, cy + rr]
        if not xs:
            raise ValueError("chart has no data")
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_hi - x_lo < 1e-12:
            x_hi = x_lo + 1.0
        if y_hi - y_lo < 1e-12:
            y_hi = y_lo + 1.0
        pad_x = 0.03 * (x_hi - x_lo)
        pad_y = 0.06 * (y_hi - y_lo)
        x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
        if self.equal_axes:
            spanx, spany = x_hi - x_lo, y_hi - y_lo
            if spanx > spany:
                mid = 0.5 * (y_lo + y_hi)
                y_lo, y_hi = mid - spanx / 2, mid + spanx / 2
            else:
                mid = 0.5 * (x_lo + x_hi)
                x_lo, x_hi = mid - spany / 2, mid + spany / 2
        return x_lo, x_hi, y_lo, y_hi

    def render(self) -> str:
        x_lo, x_hi, y_lo, y_hi = self._bounds()
        iw = WIDTH - MARGIN_L - MARGIN_R
        ih = HEIGHT - MARGIN_T - MARGIN_B

        def px(x: float) -> float:
            return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * iw

        def py(y: float) -> float:
            return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * ih

        out = []
        out.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
        out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
        out.append(
            f'<text x="{WIDTH // 2}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{self.title}</text>')
        out.append(
            f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{iw}" height="{ih}" '
            f'fill="none" stroke="#333333"/>')

        for tx in _nice_ticks(x_lo, x_hi):
            if tx < x_lo or tx > x_hi:
                continue
            out.append(f'<line x1="{_fmt(px(tx))}" y1="{MARGIN_T}" '
                       f'x2="{_fmt(px(tx))}" y2="{MARGIN_T + ih}" '
                       f'stroke="#dddddd" stroke-width="0.7"/>')
            out.append(f'<text x="{_fmt(px(tx))}" y="{MARGIN_T + ih + 16}" '
                       f'text-anchor="middle" font-family="sans-serif" '
                       f'font-size="11">{_fmt(tx)}</text>')
        for ty in _nice_ticks(y_lo, y_hi):
            if ty < y_lo or ty > y_hi:
                continue
            out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py(ty))}" '
                       f'x2="{MARGIN_L + iw}" y2="{_fmt(py(ty))}" '
                       f'stroke="#dddddd" stroke-width="0.7"/>')
            out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(py(ty) + 4)}" '
                       f'text-anchor="end" font-family="sans-serif" '
                       f'font-size="11">{_fmt(ty)}</text>')

        out.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12">{self.xlabel}</text>')
        out.append(f'<text x="16" y="{MARGIN_T + ih // 2}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 16 '
                   f'{MARGIN_T + ih // 2})">{self.ylabel}</text>')

        for y, label, color in self.hlines:
            out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py(y))}" '
                       f'x2="{MARGIN_L + iw}" y2="{_fmt(py(y))}" '
                       f'stroke="{color}" stroke-dasharray="6 4" '
                       f'stroke-width="1.2"/>')
            if label:
                out.append(f'<text x="{MARGIN_L + iw - 4}" '
                           f'y="{_fmt(py(y) - 4)}" text-anchor="end" '
                           f'font-family="sans-serif" font-size="10" '
                           f'fill="{color}">{label}</text>')

        for cx, cy, rr, color in self.circles:
            rpx = rr / (x_hi - x_lo) * iw
            out.append(f'<circle cx="{_fmt(px(cx))}" cy="{_fmt(py(cy))}" '
                       f'r="{_fmt(rpx)}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')

        for label, xs, ys, color in self.series:
            pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.3"/>')
        legend_y = MARGIN_T + 14
        for label, _, _, color in self.series:
            if not label:
                continue
            out.append(f'<line x1="{MARGIN_L + 8}" y1="{legend_y - 4}" '
                       f'x2="{MARGIN_L + 30}" y2="{legend_y - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{MARGIN_L + 34}" y="{legend_y}" '
                       f'font-family="sans-serif" font-size="11">{label}</text>')
            legend_y += 15
        out.append("</svg>")
        return "\n".join(out) + "\n"
