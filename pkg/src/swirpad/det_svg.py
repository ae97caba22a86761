"""Standalone SVG rendering of DET curves on normal-deviate axes."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import EmptyCurve
from .metrics import DetCurve

_PROBIT = NormalDist().inv_cdf
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
TICKS = (0.0001, 0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 0.999, 0.9999)


@dataclass(frozen=True)
class DetPlotOptions:
    size: int = 420           # side of the square plot area, px
    margin: int = 70
    legend_width: int = 200
    min_rate: float = 1e-4    # rates are clamped to [min_rate, 1 - min_rate]
    title: str = "DET"


def probit(p: float, min_rate: float = 1e-4) -> float:
    return _PROBIT(min(max(p, min_rate), 1.0 - min_rate))


class _Axes:
    def __init__(self, opts: DetPlotOptions):
        self.opts = opts
        self.lo = probit(opts.min_rate, opts.min_rate)
        self.hi = probit(1.0 - opts.min_rate, opts.min_rate)

    def _frac(self, rate):
        return (probit(rate, self.opts.min_rate) - self.lo) / (self.hi - self.lo)

    def x(self, apcer):
        return self.opts.margin + self._frac(apcer) * self.opts.size

    def y(self, bpcer):
        return self.opts.margin + (1.0 - self._frac(bpcer)) * self.opts.size


def _pct(p: float) -> str:
    return f"{p * 100:g}"


def render_det_svg(curves: Sequence[tuple[str, DetCurve]], options: DetPlotOptions | None = None) -> str:
    """Render named DET curves (APCER on x, BPCER on y) as SVG text.

    Output is a pure function of the inputs: coordinates are printed with
    fixed precision and curves keep their given order.
    """
    opts = options or DetPlotOptions()
    if not curves:
        raise EmptyCurve("no curves to plot")
    for name, curve in curves:
        if len(curve) < 2:
            raise EmptyCurve(f"curve {name!r} has fewer than two points")
    ax = _Axes(opts)
    m, s = opts.margin, opts.size
    width = m + s + 40 + opts.legend_width
    height = m + s + 60
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{m + s / 2:.2f}" y="{m / 2:.2f}" text-anchor="middle" font-size="14">{escape(opts.title)}</text>',
    ]
    out.append('<g class="grid" stroke="#dddddd" stroke-width="1">')
    for t in TICKS:
        gx, gy = ax.x(t), ax.y(t)
        out.append(f'<line x1="{gx:.2f}" y1="{m:.2f}" x2="{gx:.2f}" y2="{m + s:.2f}"/>')
        out.append(f'<line x1="{m:.2f}" y1="{gy:.2f}" x2="{m + s:.2f}" y2="{gy:.2f}"/>')
    out.append("</g>")
    out.append('<g class="ticks" fill="#333333">')
    for t in TICKS:
        out.append(f'<text x="{ax.x(t):.2f}" y="{m + s + 16:.2f}" text-anchor="middle">{_pct(t)}</text>')
        out.append(f'<text x="{m - 6:.2f}" y="{ax.y(t) + 4:.2f}" text-anchor="end">{_pct(t)}</text>')
    out.append("</g>")
    out.append(f'<rect x="{m}" y="{m}" width="{s}" height="{s}" fill="none" stroke="black"/>')
    out.append(
        f'<line class="eer" x1="{m:.2f}" y1="{m + s:.2f}" x2="{m + s:.2f}" y2="{m:.2f}" '
        'stroke="#999999" stroke-dasharray="4 4"/>'
    )
    out.append(f'<text x="{m + s / 2:.2f}" y="{m + s + 38:.2f}" text-anchor="middle">APCER (%)</text>')
    out.append(
        f'<text x="{m - 48:.2f}" y="{m + s / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 {m - 48:.2f} {m + s / 2:.2f})">BPCER (%)</text>'
    )
    lx = m + s + 30
    for k, (name, curve) in enumerate(curves):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{ax.x(a):.2f},{ax.y(b):.2f}" for a, b in zip(curve.apcer.tolist(), curve.bpcer.tolist()))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = m + 14 + 18 * k
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
