"""
SVG figures rendered from Jinja2 templates.

Geometry is computed here and the templates only place elements. Bar charts
use a linear scale anchored at zero, so bar lengths are proportional to the
values they show.
"""

import math
from pathlib import Path
from typing import List, Literal, Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from pydantic import BaseModel, model_validator

from exceptions import FigureError

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"

WIDTH = 720.0
HEIGHT = 420.0
MARGIN_LEFT = 80.0
MARGIN_RIGHT = 24.0
MARGIN_TOP = 48.0
MARGIN_BOTTOM = 96.0

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3")

_environment = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    autoescape=True,
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)
_environment.filters["num"] = lambda value: repr(float(value))


class Series(BaseModel):
    name: str
    values: List[float]


class FigureSpec(BaseModel):
    kind: Literal["bar", "grouped_bar", "heatmap", "distribution"]
    title: str
    x_label: str = ""
    y_label: str = ""
    categories: List[str] = []
    series: List[Series] = []
    matrix: Optional[List[List[float]]] = None
    row_labels: List[str] = []

    @model_validator(mode="after")
    def consistent(self):
        values = [v for s in self.series for v in s.values]
        if self.matrix is not None:
            values += [v for row in self.matrix for v in row]
        if any(not math.isfinite(v) for v in values):
            raise ValueError("figure values must be finite")
        if self.kind == "heatmap":
            if self.matrix is None:
                raise ValueError("a heatmap needs a matrix")
            if len(self.matrix) != len(self.row_labels):
                raise ValueError("heatmap rows and row labels differ in length")
            if any(len(row) != len(self.categories) for row in self.matrix):
                raise ValueError("heatmap columns and categories differ in length")
        else:
            if not self.series:
                raise ValueError(f"a {self.kind} figure needs at least one series")
            if any(len(s.values) != len(self.categories) for s in self.series):
                raise ValueError("series and categories differ in length")
            if self.kind in ("bar", "distribution") and len(self.series) != 1:
                raise ValueError(f"a {self.kind} figure takes exactly one series")
        return self


def build_figure(**fields) -> FigureSpec:
    """FigureSpec constructor that reports problems as FigureError."""
    try:
        return FigureSpec(**fields)
    except ValueError as exc:
        raise FigureError(f"invalid figure '{fields.get('title', '')}': {exc}") from exc


def _nice_ticks(low: float, high: float, count: int = 5) -> List[float]:
    span = high - low
    raw = span / count
    magnitude = 10.0 ** math.floor(math.log10(raw))
    step = min((m * magnitude for m in (1.0, 2.0, 2.5, 5.0, 10.0) if m * magnitude >= raw), default=raw)
    first = math.ceil(low / step)
    last = math.floor(high / step)
    return [round(i * step, 12) for i in range(first, last + 1)]


def _bar_context(spec: FigureSpec) -> dict:
    values = [v for s in spec.series for v in s.values]
    low = min(0.0, min(values, default=0.0))
    high = max(0.0, max(values, default=0.0))
    if low == high:
        high = 1.0
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    scale = plot_h / (high - low)
    zero_y = MARGIN_TOP + high * scale

    n_cat = max(1, len(spec.categories))
    slot = plot_w / n_cat
    bar_w = slot * 0.8 / len(spec.series)
    bars = []
    for s_index, series in enumerate(spec.series):
        for c_index, value in enumerate(series.values):
            length = abs(value) * scale
            bars.append({
                "x": MARGIN_LEFT + c_index * slot + slot * 0.1 + s_index * bar_w,
                "y": zero_y - length if value >= 0 else zero_y,
                "width": bar_w,
                "height": length,
                "fill": PALETTE[s_index % len(PALETTE)],
                "label": f"{series.name}: {spec.categories[c_index]} = {value:.4g}",
            })
    labels = [{"x": MARGIN_LEFT + i * slot + slot / 2.0, "y": HEIGHT - MARGIN_BOTTOM + 14.0, "text": name}
              for i, name in enumerate(spec.categories)]
    ticks = [{"y": zero_y - t * scale, "text": f"{t:g}"} for t in _nice_ticks(low, high)]
    legend = [{"x": MARGIN_LEFT + i * 150.0, "fill": PALETTE[i % len(PALETTE)], "text": s.name}
              for i, s in enumerate(spec.series)] if len(spec.series) > 1 else []
    return {"bars": bars, "labels": labels, "ticks": ticks, "legend": legend, "zero_y": zero_y}


def diverging_color(value: float, limit: float) -> str:
    """Blue for negative, white at zero, red for positive; depends only on value / limit."""
    t = 0.0 if limit <= 0 else max(-1.0, min(1.0, value / limit))
    fade = int(round(255 * (1.0 - abs(t))))
    if t >= 0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def _heatmap_context(spec: FigureSpec) -> dict:
    n_rows, n_cols = len(spec.row_labels), len(spec.categories)
    cell = max(4.0, min(40.0, 560.0 / max(1, n_rows, n_cols)))
    left = 40.0 + 7.0 * max([len(r) for r in spec.row_labels] + [4])
    top = MARGIN_TOP + 7.0 * max([len(c) for c in spec.categories] + [4])
    limit = max([abs(v) for row in spec.matrix for v in row] + [0.0])
    cells = [
        {"x": left + j * cell, "y": top + i * cell, "size": cell,
         "fill": diverging_color(value, limit),
         "label": f"{spec.row_labels[i]} / {spec.categories[j]} = {value:.4g}"}
        for i, row in enumerate(spec.matrix)
        for j, value in enumerate(row)
    ]
    rows = [{"x": left - 4.0, "y": top + (i + 0.5) * cell, "text": name} for i, name in enumerate(spec.row_labels)]
    cols = [{"x": left + (j + 0.5) * cell, "y": top - 4.0, "text": name} for j, name in enumerate(spec.categories)]
    return {
        "cells": cells,
        "row_labels": rows,
        "column_labels": cols,
        "width": left + n_cols * cell + MARGIN_RIGHT,
        "height": top + n_rows * cell + 40.0,
        "limit": limit,
    }


def _distribution_context(spec: FigureSpec) -> dict:
    values = spec.series[0].values
    total = sum(values)
    top_value = max(values + [0.0]) or 1.0
    row_h = 24.0
    plot_w = WIDTH - 260.0
    bars = [
        {"x": 180.0, "y": MARGIN_TOP + i * row_h, "width": value / top_value * plot_w, "height": row_h * 0.7,
         "fill": PALETTE[i % len(PALETTE)],
         "text": f"{name} {(value / total * 100.0 if total else 0.0):.2f}%"}
        for i, (name, value) in enumerate(zip(spec.categories, values))
    ]
    return {"bars": bars, "height": MARGIN_TOP + len(values) * row_h + 24.0}


def render_svg(f: FigureSpec) -> str:
    """Render a standalone SVG 1.1 document."""
    if f.kind == "heatmap":
        template, context = "heatmap.svg.j2", _heatmap_context(f)
    elif f.kind == "distribution":
        template, context = "distribution.svg.j2", _distribution_context(f)
    else:
        template, context = "bar.svg.j2", _bar_context(f)
    defaults = {"width": WIDTH, "height": HEIGHT, "margin_left": MARGIN_LEFT,
                "margin_top": MARGIN_TOP, "margin_bottom": MARGIN_BOTTOM, "margin_right": MARGIN_RIGHT}
    return _environment.get_template(template).render(spec=f, **{**defaults, **context})
