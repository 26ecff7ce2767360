"""Dependency-free SVG charts for run artifacts.

Only two chart shapes are needed: line charts (queue depth or throughput
against time, CDFs against depth) and grouped bar charts (mean flow
completion time per size bucket, one bar group per bucket). Output is
plain SVG text with fixed-precision coordinates so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = ["Series", "line_chart", "bar_chart"]

WIDTH = 640
HEIGHT = 400
MARGIN_L = 64
MARGIN_R = 16
MARGIN_T = 36
MARGIN_B = 48

# muted qualitative palette, repeats after six series
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    """One plottable line: a label and equal-length x/y vectors."""

    label: str
    xs: Sequence[float]
    ys: Sequence[float]

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.ys):
            raise ValueError(
                f"series {self.label!r}: {len(self.xs)} x values "
                f"vs {len(self.ys)} y values"
            )


def _fmt(v: float) -> str:
    # fixed two decimals keeps files diffable; SVG user units are pixels
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick positions on a 1-2-5 ladder covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _tick_label(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:g}"


class _Svg:
    def __init__(self, title: str) -> None:
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{_esc(title)}</text>',
        ]

    def line(self, x1: float, y1: float, x2: float, y2: float, color: str,
             width: float = 1.0) -> None:
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
            f'y2="{_fmt(y2)}" stroke="{color}" stroke-width="{width:g}"/>'
        )

    def polyline(self, pts: list[tuple[float, float]], color: str) -> None:
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )

    def rect(self, x: float, y: float, w: float, h: float, color: str) -> None:
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{color}"/>'
        )

    def text(self, x: float, y: float, s: str, anchor: str = "middle",
             size: int = 11, rotate: bool = False) -> None:
        extra = (
            f' transform="rotate(-90 {_fmt(x)} {_fmt(y)})"' if rotate else ""
        )
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}"{extra}>'
            f"{_esc(s)}</text>"
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _axes(svg: _Svg, x_label: str, y_label: str) -> None:
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    svg.line(x0, y0, x1, y0, "#333")
    svg.line(x0, y0, x0, y1, "#333")
    svg.text((x0 + x1) / 2, HEIGHT - 10, x_label)
    svg.text(18, (y0 + y1) / 2, y_label, rotate=True)


def _no_data(title: str, x_label: str, y_label: str) -> str:
    svg = _Svg(title)
    _axes(svg, x_label, y_label)
    svg.text(WIDTH / 2, HEIGHT / 2, "no data", size=16)
    return svg.render()


def _legend(svg: _Svg, labels: Sequence[str]) -> None:
    x = MARGIN_L + 8
    y = MARGIN_T + 6
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        svg.rect(x, y + i * 16, 10, 10, color)
        svg.text(x + 16, y + i * 16 + 9, label, anchor="start")


def line_chart(
    series: Sequence[Series],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Render one or more series as polylines with shared axes."""
    series = [s for s in series if len(s.xs) > 0]
    if not series:
        return _no_data(title, x_label, y_label)

    x_lo = min(min(s.xs) for s in series)
    x_hi = max(max(s.xs) for s in series)
    y_lo = min(0.0, min(min(s.ys) for s in series))
    y_hi = max(max(s.ys) for s in series)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    y_hi *= 1.05  # headroom so the peak is not glued to the frame

    px0, px1 = MARGIN_L, WIDTH - MARGIN_R
    py0, py1 = HEIGHT - MARGIN_B, MARGIN_T

    def sx(v: float) -> float:
        return px0 + (v - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(v: float) -> float:
        return py0 - (v - y_lo) / (y_hi - y_lo) * (py0 - py1)

    svg = _Svg(title)
    for t in _nice_ticks(x_lo, x_hi):
        svg.line(sx(t), py0, sx(t), py0 + 4, "#333")
        svg.text(sx(t), py0 + 16, _tick_label(t))
    for t in _nice_ticks(y_lo, y_hi):
        svg.line(px0 - 4, sy(t), px0, sy(t), "#333")
        svg.line(px0, sy(t), px1, sy(t), "#eee")
        svg.text(px0 - 8, sy(t) + 4, _tick_label(t), anchor="end")
    _axes(svg, x_label, y_label)
    for i, s in enumerate(series):
        pts = [(sx(x), sy(y)) for x, y in zip(s.xs, s.ys)]
        svg.polyline(pts, PALETTE[i % len(PALETTE)])
    if len(series) > 1 or series[0].label:
        _legend(svg, [s.label for s in series])
    return svg.render()


def bar_chart(
    group_labels: Sequence[str],
    series: Sequence[Series],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Grouped bars: one cluster per group label, one bar per series.

    Each series' ys must have one value per group; xs are ignored.
    """
    series = [s for s in series if len(s.ys) > 0]
    if not series or not group_labels:
        return _no_data(title, x_label, y_label)
    for s in series:
        if len(s.ys) != len(group_labels):
            raise ValueError(
                f"series {s.label!r} has {len(s.ys)} values for "
                f"{len(group_labels)} groups"
            )

    y_hi = max(max(s.ys) for s in series) * 1.05
    if y_hi <= 0:
        y_hi = 1.0

    px0, px1 = MARGIN_L, WIDTH - MARGIN_R
    py0, py1 = HEIGHT - MARGIN_B, MARGIN_T
    ngroups = len(group_labels)
    nbars = len(series)
    slot = (px1 - px0) / ngroups
    bar_w = slot * 0.8 / nbars

    def sy(v: float) -> float:
        return py0 - v / y_hi * (py0 - py1)

    svg = _Svg(title)
    for t in _nice_ticks(0.0, y_hi):
        svg.line(px0 - 4, sy(t), px0, sy(t), "#333")
        svg.line(px0, sy(t), px1, sy(t), "#eee")
        svg.text(px0 - 8, sy(t) + 4, _tick_label(t), anchor="end")
    _axes(svg, x_label, y_label)
    for gi, label in enumerate(group_labels):
        cx = px0 + slot * (gi + 0.5)
        svg.text(cx, py0 + 16, label)
        for si, s in enumerate(series):
            x = cx - 0.4 * slot + si * bar_w
            y = sy(s.ys[gi])
            svg.rect(x, y, bar_w, py0 - y, PALETTE[si % len(PALETTE)])
    _legend(svg, [s.label for s in series])
    return svg.render()
