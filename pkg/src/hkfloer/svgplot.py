"""Minimal self-contained SVG line plots."""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_plot(
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
    hline: float | None = None,
    width: int = 640,
    height: int = 400,
    labels=None,
) -> str:
    """Render ``[(x, y), ...]`` as polylines; deterministic output for identical input."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 36, 48
    xs = np.concatenate([np.asarray(x, float) for x, _ in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, float) for _, y in series]) if series else np.zeros(1)
    if logy:
        ys = np.log10(np.clip(np.abs(ys), 1e-300, None))
    finite = np.isfinite(ys)
    ys = ys[finite] if finite.any() else np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if hline is not None and not logy:
        y0, y1 = min(y0, hline), max(y1, hline)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    W, Hh = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * W

    def py(y):
        return pad_t + (1.0 - (y - y0) / (y1 - y0)) * Hh

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{W}" height="{Hh}" fill="none" stroke="black"/>',
    ]
    for frac in np.linspace(0, 1, 5):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        ylab = f"1e{_fmt(yv)}" if logy else _fmt(yv)
        out.append(f'<text x="{px(xv):.1f}" y="{height - pad_b + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{_fmt(xv)}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{ylab}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>')
    if hline is not None and not logy:
        out.append(f'<line x1="{pad_l}" x2="{pad_l + W}" y1="{py(hline):.1f}" y2="{py(hline):.1f}" '
                   f'stroke="gray" stroke-dasharray="4 3"/>')
    for j, (x, y) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if logy:
            y = np.log10(np.clip(np.abs(y), 1e-300, None))
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        color = PALETTE[j % len(PALETTE)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        if labels is not None:
            out.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 + 13 * j}" font-family="sans-serif" '
                       f'font-size="11" fill="{color}">{labels[j]}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
