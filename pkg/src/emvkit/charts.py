"""Dependency-free SVG line charts.

Charts are a convenience view over the CSV twins the CLI writes next to them:
deterministic output (no timestamps, fixed float formatting), multi-series
panels with solid/dashed/dotted styles for side-by-side constraint
comparisons, and an optional secondary-axis overlay series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "line_panel", "svg_document", "decomposition_chart", "frailty_chart"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
DASHES = {"solid": None, "dashed": "6,4", "dotted": "2,3"}

PANEL_W = 720
PANEL_H = 240
MARGIN_L = 64
MARGIN_R = 16
MARGIN_T = 28
MARGIN_B = 36


@dataclass
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray
    style: str = "solid"
    color: str | None = None
    band: np.ndarray | None = None  # half-width for a shaded +/- band


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.4g}"


def line_panel(
    series: list[Series],
    title: str,
    x_label: str,
    y_label: str,
    y_offset: int = 0,
    overlay: Series | None = None,
) -> str:
    """One chart panel as an SVG <g> element at the given vertical offset.

    ``overlay`` is drawn rescaled (min-max) into the panel's y-range with its
    own raw scale on a right-hand secondary axis.
    """
    pts = [(s.x[np.isfinite(s.y)], s.y[np.isfinite(s.y)]) for s in series]
    xs = np.concatenate([p[0] for p in pts if p[0].size]) if pts else np.array([0.0])
    ys_list = [p[1] for p in pts if p[1].size]
    for s in series:
        if s.band is not None:
            fin = np.isfinite(s.y) & np.isfinite(s.band)
            ys_list.append(s.y[fin] + s.band[fin])
            ys_list.append(s.y[fin] - s.band[fin])
    ys = np.concatenate(ys_list) if ys_list else np.array([0.0])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    plot_h = PANEL_H - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo or 1.0) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = [f'<g transform="translate(0,{y_offset})">']
    out.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="white" stroke="#cccccc"/>'
    )
    out.append(
        f'<text x="{MARGIN_L}" y="{MARGIN_T - 10}" font-size="13" font-family="sans-serif" '
        f'font-weight="bold">{title}</text>'
    )
    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            out.append(
                f'<line x1="{_fmt(px(t))}" y1="{MARGIN_T + plot_h}" x2="{_fmt(px(t))}" '
                f'y2="{MARGIN_T + plot_h + 4}" stroke="#666666"/>'
            )
            out.append(
                f'<text x="{_fmt(px(t))}" y="{MARGIN_T + plot_h + 16}" font-size="10" '
                f'font-family="sans-serif" text-anchor="middle">{_fmt_tick(t)}</text>'
            )
    for t in _nice_ticks(y_lo, y_hi):
        if y_lo <= t <= y_hi:
            out.append(
                f'<line x1="{MARGIN_L - 4}" y1="{_fmt(py(t))}" x2="{MARGIN_L}" '
                f'y2="{_fmt(py(t))}" stroke="#666666"/>'
            )
            out.append(
                f'<text x="{MARGIN_L - 7}" y="{_fmt(py(t) + 3)}" font-size="10" '
                f'font-family="sans-serif" text-anchor="end">{_fmt_tick(t)}</text>'
            )
    out.append(
        f'<text x="{MARGIN_L + plot_w / 2}" y="{PANEL_H - 6}" font-size="11" '
        f'font-family="sans-serif" text-anchor="middle">{x_label}</text>'
    )
    out.append(
        f'<text x="14" y="{MARGIN_T + plot_h / 2}" font-size="11" font-family="sans-serif" '
        f'text-anchor="middle" transform="rotate(-90 14 {MARGIN_T + plot_h / 2})">{y_label}</text>'
    )

    for idx, s in enumerate(series):
        color = s.color or PALETTE[idx % len(PALETTE)]
        fin = np.isfinite(np.asarray(s.y, dtype=float))
        sx, sy = np.asarray(s.x, dtype=float)[fin], np.asarray(s.y, dtype=float)[fin]
        if s.band is not None:
            sb = np.asarray(s.band, dtype=float)[fin]
            upper = " ".join(f"{_fmt(px(x))},{_fmt(py(y + b))}" for x, y, b in zip(sx, sy, sb))
            lower = " ".join(
                f"{_fmt(px(x))},{_fmt(py(y - b))}" for x, y, b in zip(sx[::-1], sy[::-1], sb[::-1])
            )
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" opacity="0.15"/>')
        points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(sx, sy))
        dash = DASHES.get(s.style)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>'
        )
        out.append(
            f'<text x="{PANEL_W - MARGIN_R - 6}" y="{MARGIN_T + 14 + 13 * idx}" font-size="10" '
            f'font-family="sans-serif" text-anchor="end" fill="{color}">{s.name}</text>'
        )

    if overlay is not None:
        o_fin = np.isfinite(np.asarray(overlay.y, dtype=float))
        ox = np.asarray(overlay.x, dtype=float)[o_fin]
        oy = np.asarray(overlay.y, dtype=float)[o_fin]
        o_lo, o_hi = float(oy.min()), float(oy.max())
        span = (o_hi - o_lo) or 1.0
        scaled = y_lo + (oy - o_lo) / span * (y_hi - y_lo)
        color = overlay.color or "#444444"
        points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(ox, scaled))
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.2" '
            'stroke-dasharray="4,3"/>'
        )
        for frac, val in ((0.0, o_lo), (1.0, o_hi)):
            ypix = py(y_lo + frac * (y_hi - y_lo))
            out.append(
                f'<text x="{MARGIN_L + plot_w + 4}" y="{_fmt(ypix + 3)}" font-size="9" '
                f'font-family="sans-serif" fill="{color}">{_fmt_tick(val)}</text>'
            )
        out.append(
            f'<text x="{PANEL_W - MARGIN_R - 6}" y="{MARGIN_T + 14 + 13 * len(series)}" font-size="10" '
            f'font-family="sans-serif" text-anchor="end" fill="{color}">{overlay.name} (overlay)</text>'
        )

    out.append("</g>")
    return "\n".join(out)


def svg_document(panels: list[str], width: int = PANEL_W) -> str:
    height = PANEL_H * len(panels)
    body = "\n".join(panels)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="{width}" height="{height}" fill="white"/>\n'
        f"{body}\n</svg>\n"
    )


def decomposition_chart(decomps: list, labels: list[str], overlay: Series | None = None) -> str:
    """Three stacked panels (exogenous, maturity, vintage), one series per decomposition."""
    styles = ["solid", "dashed", "dotted", "solid", "dashed", "dotted"]
    e_series = [
        Series(lab, d.layout.times, d.exogenous, styles[i % len(styles)],
               band=d.exogenous_se if getattr(d, "exogenous_se", None) is not None else None)
        for i, (d, lab) in enumerate(zip(decomps, labels))
    ]
    m_series = [
        Series(lab, d.layout.ages, d.maturity, styles[i % len(styles)],
               band=d.maturity_se if getattr(d, "maturity_se", None) is not None else None)
        for i, (d, lab) in enumerate(zip(decomps, labels))
    ]
    v_series = [
        Series(lab, d.layout.vintages, d.vintage, styles[i % len(styles)],
               band=d.vintage_se if getattr(d, "vintage_se", None) is not None else None)
        for i, (d, lab) in enumerate(zip(decomps, labels))
    ]
    panels = [
        line_panel(e_series, "Exogenous effects", "time (month)", "effect", 0, overlay=overlay),
        line_panel(m_series, "Maturity effects", "age (months on book)", "effect", PANEL_H),
        line_panel(v_series, "Vintage effects", "vintage", "effect", 2 * PANEL_H),
    ]
    return svg_document(panels)


def frailty_chart(curves) -> str:
    """Dashed account-quantile log-hazard curves plus the solid vintage mixture curve."""
    ages = curves.ages
    series = [
        Series(f"q{int(round(100 * q))}", ages, curves.account_log_hazard()[i], "dashed", color="#999999")
        for i, q in enumerate(curves.quantiles)
    ]
    series.append(Series("vintage", ages, curves.vintage_log_hazard(), "solid", color="#d62728"))
    return svg_document([line_panel(series, "Account and vintage log-hazard", "age (months)", "log hazard", 0)])
