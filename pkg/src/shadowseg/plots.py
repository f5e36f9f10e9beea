"""Self-contained SVG charts for size and shape distributions.

Each chart shows one or more measured histograms as grouped bars and an
optional ground-truth histogram as a line overlay.  Elements carry class
attributes (``bar``, ``gt``, ``axis``, ``legend``) so tests can inspect the
structure without comparing bytes.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .evalx import Histogram

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=60, right=20, top=40, bottom=50)
PALETTE = ["#4477aa", "#ee6677", "#228833", "#ccbb44"]


def _common_bins(hists: list[Histogram]) -> tuple[int, int]:
    used = [h for h in hists if h.counts.size]
    if not used:
        return 0, 1
    k0 = min(h.k0 for h in used)
    k1 = max(h.k0 + h.counts.size for h in used)
    return k0, k1 - k0


def _densities(h: Histogram, k0: int, n: int) -> np.ndarray:
    if not h.counts.size:
        return np.zeros(n)
    counts = h.aligned(k0, n)
    return counts / (counts.sum() * h.bin_width)


def histogram_svg(title: str, xlabel: str, series: list[tuple[str, Histogram]],
                  ground_truth: Histogram | None = None) -> str:
    """Grouped-bar chart of ``series`` with an optional ground-truth line."""
    hists = [h for _, h in series] + ([ground_truth] if ground_truth is not None else [])
    width = hists[0].bin_width if hists else 1.0
    k0, n = _common_bins(hists)
    dens = [_densities(h, k0, n) for _, h in series]
    gt = _densities(ground_truth, k0, n) if ground_truth is not None else None
    top = max([d.max(initial=0) for d in dens] + ([gt.max(initial=0)] if gt is not None else []) + [1e-12])

    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    bin_px = (x1 - x0) / n
    sy = (y0 - y1) / (top * 1.1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<text class="title" x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text class="xlabel" x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text class="ylabel" x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">probability density</text>',
    ]
    for i in range(n + 1):
        edge = (k0 + i) * width
        if n <= 20 or i % max(1, n // 10) == 0:
            x = x0 + i * bin_px
            out.append(f'<text class="tick" x="{x:.1f}" y="{y0 + 16}" text-anchor="middle">{edge:g}</text>')
    for frac in (0.0, 0.5, 1.0):
        v = top * frac
        y = y0 - v * sy
        out.append(f'<text class="tick" x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')

    group = bin_px * 0.8 / max(len(series), 1)
    for s, ((name, _), d) in enumerate(zip(series, dens)):
        color = PALETTE[s % len(PALETTE)]
        for i, v in enumerate(d):
            if v <= 0:
                continue
            x = x0 + i * bin_px + bin_px * 0.1 + s * group
            out.append(
                f'<rect class="bar" data-series="{escape(name)}" x="{x:.2f}" y="{y0 - v * sy:.2f}" '
                f'width="{group:.2f}" height="{v * sy:.2f}" fill="{color}"/>'
            )
    if gt is not None:
        pts = " ".join(f"{x0 + (i + 0.5) * bin_px:.2f},{y0 - v * sy:.2f}" for i, v in enumerate(gt))
        out.append(f'<polyline class="gt" points="{pts}" fill="none" stroke="black" stroke-width="2"/>')

    legend = [(name, PALETTE[s % len(PALETTE)]) for s, (name, _) in enumerate(series)]
    if gt is not None:
        legend.append(("ground truth", "black"))
    for j, (name, color) in enumerate(legend):
        y = MARGIN["top"] + 8 + 18 * j
        out.append(f'<rect class="legend" x="{x1 - 130}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text class="legend" x="{x1 - 112}" y="{y + 2}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str) -> None:
    Path(path).write_text(text)
