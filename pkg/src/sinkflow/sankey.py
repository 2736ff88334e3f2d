"""Renderer-agnostic Sankey documents for faction flows, plus a tiny SVG writer."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError

ROW_SUM_ATOL = 1e-9


def sankey_document(marginals: Sequence, plans: Sequence, marker: int, labels=None, time_labels=None) -> dict:
    """Build a Sankey document.

    ``marginals`` has one entry per column (time step) and ``plans`` one per
    gap between columns.  ``marker`` is the number of leading columns that
    were given as input; columns from ``marker`` on are forecasts.
    """
    marginals = [np.asarray(x, dtype=np.float64) for x in marginals]
    plans = [np.asarray(P, dtype=np.float64) for P in plans]
    if not plans:
        raise ConfigurationError("no flows to export")
    if len(marginals) != len(plans) + 1:
        raise ConfigurationError(f"need {len(plans) + 1} marginals for {len(plans)} flow blocks, got {len(marginals)}")
    k = len(marginals[0])
    if not 0 <= marker <= len(marginals):
        raise ConfigurationError(f"marker {marker} outside [0, {len(marginals)}]")
    steps = []
    for t, P in enumerate(plans):
        if P.shape != (k, k):
            raise InvalidInputError(f"flow block {t} has shape {P.shape}, expected ({k}, {k})")
        if np.any(P < 0):
            raise InvalidInputError(f"flow block {t} has negative entries")
        if not np.allclose(P.sum(axis=1), marginals[t], atol=ROW_SUM_ATOL, rtol=0):
            raise InvalidInputError(f"flow block {t} rows do not sum to the marginals of column {t}")
        steps.append({"marginals": marginals[t].tolist(), "flows": P.tolist()})
    return {
        "k": k,
        "labels": list(labels) if labels is not None else [f"F{i}" for i in range(k)],
        "time_labels": list(time_labels) if time_labels is not None else [f"T{t + 1}" for t in range(len(marginals))],
        "columns": [x.tolist() for x in marginals],
        "steps": steps,
        "marker": int(marker),
    }


def validate_document(doc: dict) -> None:
    """Check the row-sum invariant of every flow block."""
    for t, step in enumerate(doc["steps"]):
        P = np.asarray(step["flows"])
        if not np.allclose(P.sum(axis=1), step["marginals"], atol=ROW_SUM_ATOL, rtol=0):
            raise InvalidInputError(f"step {t}: flows do not row-sum to marginals")


def to_svg(doc: dict, width: int = 800, height: int = 400, min_flow: float = 1e-4) -> str:
    """Static SVG: one bar column per time step, ribbons for flows, a dashed marker line."""
    cols = [np.asarray(c) for c in doc["columns"]]
    n = len(cols)
    k = doc["k"]
    pad, bar_w, gap = 40, 14, 4.0
    usable = height - 2 * pad - gap * (k - 1)
    xs = [pad + i * (width - 2 * pad - bar_w) / max(n - 1, 1) for i in range(n)]
    palette = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"]

    def tops(x):
        out, y = [], pad
        for v in x:
            out.append(y)
            y += v * usable + gap
        return out

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    col_tops = [tops(c) for c in cols]
    for t, step in enumerate(doc["steps"]):
        P = np.asarray(step["flows"])
        out_off = list(col_tops[t])
        in_off = list(col_tops[t + 1])
        x0, x1 = xs[t] + bar_w, xs[t + 1]
        for i in range(k):
            for j in range(k):
                h = P[i, j] * usable
                if P[i, j] < min_flow:
                    continue
                y0, y1 = out_off[i], in_off[j]
                xm = (x0 + x1) / 2
                parts.append(
                    f'<path d="M{x0:.1f},{y0:.1f} C{xm:.1f},{y0:.1f} {xm:.1f},{y1:.1f} {x1:.1f},{y1:.1f} '
                    f'L{x1:.1f},{y1 + h:.1f} C{xm:.1f},{y1 + h:.1f} {xm:.1f},{y0 + h:.1f} {x0:.1f},{y0 + h:.1f} Z" '
                    f'fill="#999" fill-opacity="0.45"/>'
                )
                out_off[i] += h
                in_off[j] += h
    for t, x in enumerate(cols):
        for i, (top, v) in enumerate(zip(col_tops[t], x)):
            parts.append(
                f'<rect x="{xs[t]:.1f}" y="{top:.1f}" width="{bar_w}" height="{v * usable:.1f}" '
                f'fill="{palette[i % len(palette)]}"/>'
            )
        parts.append(f'<text x="{xs[t]:.1f}" y="{height - pad / 3:.1f}" font-size="12">{doc["time_labels"][t]}</text>')
    m = doc["marker"]
    if 0 < m < n:
        xm = (xs[m - 1] + bar_w + xs[m]) / 2
        parts.append(
            f'<line x1="{xm:.1f}" y1="{pad / 2:.1f}" x2="{xm:.1f}" y2="{height - pad / 2:.1f}" '
            f'stroke="red" stroke-dasharray="6,4"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
