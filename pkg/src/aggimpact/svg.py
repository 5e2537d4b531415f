"""Dependency-free SVG line charts: polylines, a frame, and tick labels."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_chart"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")
_W, _H, _PAD = 640, 420, 60


def _transform(v: np.ndarray, log: bool) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if log:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v > 0, np.log10(v), np.nan)
    return v


def _ticks(lo: float, hi: float, log: bool) -> list[tuple[float, str]]:
    if log:
        return [(float(e), f"1e{e}") for e in range(int(np.ceil(lo)), int(np.floor(hi)) + 1)]
    return [(float(t), f"{t:.3g}") for t in np.linspace(lo, hi, 5)]


def line_chart(series, path, title: str = "", xlabel: str = "", ylabel: str = "",
               logx: bool = False, logy: bool = False) -> None:
    """Write ``series`` (a list of ``(label, x, y)``) as an SVG file.

    Non-finite points, and non-positive ones on log axes, are dropped.
    """
    prepared = []
    for label, x, y in series:
        tx, ty = _transform(x, logx), _transform(y, logy)
        ok = np.isfinite(tx) & np.isfinite(ty)
        prepared.append((label, tx[ok], ty[ok]))
    allx = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(0)
    ally = np.concatenate([p[2] for p in prepared]) if prepared else np.zeros(0)
    if len(allx) == 0:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    else:
        x0, x1, y0, y1 = allx.min(), allx.max(), ally.min(), ally.max()
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#000"/>',
        f'<text x="{_W / 2:.1f}" y="{_PAD / 2:.1f}" text-anchor="middle" font-size="14">'
        f"{escape(title)}</text>",
        f'<text x="{_W / 2:.1f}" y="{_H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{_H / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {_H / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for v, lab in _ticks(x0, x1, logx):
        out.append(f'<text x="{px(v):.1f}" y="{_H - _PAD + 16}" text-anchor="middle">{lab}</text>')
    for v, lab in _ticks(y0, y1, logy):
        out.append(f'<text x="{_PAD - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    for i, (label, x, y) in enumerate(prepared):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{_W - _PAD + 4}" y="{_PAD + 14 * i + 10}" fill="{color}">'
                   f"{escape(str(label))}</text>")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
