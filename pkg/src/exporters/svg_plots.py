"""Self-contained SVG line charts."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..utils.helpers import ensure_output_directory

WIDTH = 720
HEIGHT = 420
MARGIN_LEFT = 70
MARGIN_RIGHT = 170
MARGIN_TOP = 40
MARGIN_BOTTOM = 50
Y_TICKS = 5
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
DASHES = ("", "6 3", "2 3", "8 3 2 3", "1 2")


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _tick_label(value: float) -> str:
    text = f"{value:.4g}"
    return "0" if text in ("-0", "0") else text


def emit_svg(
    series: Mapping[str, Sequence[float]] | Sequence[tuple[str, Sequence[float]]],
    *,
    title: str = "",
    x_label: str = "hour",
    y_label: str = "",
    x_values: Sequence[float] | None = None,
    width: int = WIDTH,
    height: int = HEIGHT,
) -> str:
    """Render labeled series as polylines on shared axes.

    Args:
        series: Label to values, drawn and listed in the legend in input order.
        title: Chart title.
        x_label: Horizontal axis caption.
        y_label: Vertical axis caption.
        x_values: Common abscissae; defaults to ``0..n-1``.
        width: Image width in pixels.
        height: Image height in pixels.

    Returns:
        The SVG document. The same input always yields the same text.

    Raises:
        ValueError: If there is no series, a series is empty, or lengths differ.
    """
    items = list(series.items()) if isinstance(series, Mapping) else list(series)
    if not items:
        raise ValueError("At least one series is required.")
    arrays = [(str(label), np.asarray(values, dtype=float)) for label, values in items]
    length = arrays[0][1].size
    if length == 0:
        raise ValueError("Series must not be empty.")
    if any(values.size != length for _, values in arrays):
        raise ValueError("All series must have the same length.")
    xs = np.arange(length, dtype=float) if x_values is None else np.asarray(x_values, float)
    if xs.size != length:
        raise ValueError("x_values must match the series length.")

    finite = np.concatenate([values[np.isfinite(values)] for _, values in arrays])
    y_min = float(finite.min()) if finite.size else 0.0
    y_max = float(finite.max()) if finite.size else 1.0
    if y_max - y_min < 1e-12:
        pad = max(abs(y_max) * 0.1, 1.0)
        y_min, y_max = y_min - pad, y_max + pad
    x_min, x_max = float(xs.min()), float(xs.max())
    if x_max - x_min < 1e-12:
        x_min, x_max = x_min - 1.0, x_max + 1.0

    plot_w = width - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = height - MARGIN_TOP - MARGIN_BOTTOM

    def sx(x: float) -> float:
        return MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        return MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_fmt(width / 2)}" y="22" text-anchor="middle" font-size="15">'
            f"{escape(title)}</text>",
        )
    for tick in np.linspace(y_min, y_max, Y_TICKS):
        y = sy(float(tick))
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{_fmt(y)}" x2="{MARGIN_LEFT + plot_w}" '
            f'y2="{_fmt(y)}" stroke="#dddddd"/>',
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">'
            f"{_tick_label(float(tick))}</text>",
        )
    for x in xs:
        parts.append(
            f'<text x="{_fmt(sx(float(x)))}" y="{MARGIN_TOP + plot_h + 16}" '
            f'text-anchor="middle" font-size="10">{_tick_label(float(x))}</text>',
        )
    parts.append(
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
    )
    parts.append(
        f'<text x="{_fmt(MARGIN_LEFT + plot_w / 2)}" y="{height - 12}" '
        f'text-anchor="middle">{escape(x_label)}</text>',
    )
    if y_label:
        parts.append(
            f'<text x="16" y="{_fmt(MARGIN_TOP + plot_h / 2)}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_fmt(MARGIN_TOP + plot_h / 2)})">{escape(y_label)}</text>',
        )

    for index, (label, values) in enumerate(arrays):
        color = COLORS[index % len(COLORS)]
        dash = DASHES[(index // len(COLORS) + index) % len(DASHES)]
        points = " ".join(
            f"{_fmt(sx(float(x)))},{_fmt(sy(float(y)))}"
            for x, y in zip(xs, values)
            if np.isfinite(y)
        )
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash_attr} '
            f'points="{points}"/>',
        )
        legend_y = MARGIN_TOP + 12 + 18 * index
        legend_x = MARGIN_LEFT + plot_w + 12
        parts.append(
            f'<line x1="{legend_x}" y1="{legend_y}" x2="{legend_x + 24}" y2="{legend_y}" '
            f'stroke="{color}" stroke-width="2"{dash_attr}/>',
        )
        parts.append(
            f'<text x="{legend_x + 30}" y="{legend_y + 4}">{escape(label)}</text>',
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path: str | Path, document: str) -> None:
    ensure_output_directory(path)
    with open(path, "w", encoding="utf-8", newline="\n") as file_handle:
        file_handle.write(document)
