"""Deterministic artifact writers: CSV, JSON, and SVG.

Every writer in this module is a pure function of its inputs: given the same
data it produces byte-identical files.  That property is load-bearing — the
CLI promises that re-running a command with the same config and seed
reproduces its artifacts exactly — so the writers avoid dict iteration order,
locale-dependent formatting, and float repr drift:

* floats are formatted with ``%.12g`` (shortest stable form at 12 significant
  digits, enough to round-trip every quantity we export);
* CSV rows use RFC-4180 quoting with CRLF line endings;
* JSON is dumped with sorted keys;
* SVG elements are emitted in a fixed, sorted order on a fixed canvas.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Mapping, Optional, Sequence

__all__ = [
    "format_value",
    "render_csv",
    "write_csv",
    "write_json",
    "spiral_rows",
    "witness_rows",
    "cascade_rows",
    "decomposition_rows",
    "classification_rows",
    "poset_rows",
    "hasse_svg",
    "chart_strip_svg",
]


def format_value(value) -> str:
    """Render one cell deterministically.

    Floats use ``%.12g`` so that equal doubles always produce equal text;
    integers and strings pass through; None becomes the empty field.
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.12g" % value
    if isinstance(value, (int,)):
        return str(value)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    """Render a table as RFC-4180 CSV (CRLF, minimal quoting)."""
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "wb") as fh:
        fh.write(render_csv(header, rows))


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return float(format_value(obj)) if math.isfinite(obj) else format_value(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            return _jsonable(obj.item())
        except (AttributeError, ValueError):
            pass
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Table builders.  Each returns (header, rows) ready for write_csv.
# ---------------------------------------------------------------------------


def spiral_rows(spiral):
    """One row per polyline vertex: chart, coordinates, cumulative length."""
    header = ("index", "chart", "u", "v", "arclength")
    path = spiral.path if hasattr(spiral, "path") else spiral
    t0 = path.t_start
    rows = [
        (i, int(v.chart), float(v.xy[0]), float(v.xy[1]), float(t - t0))
        for i, (v, t) in enumerate(zip(path.vertices, path.times))
    ]
    return header, rows


def witness_rows(reports):
    """Redirect evidence: one row per (pair, radius) from preorder reports."""
    header = ("alpha", "beta", "r", "q_fit", "Q_fit", "strategy", "landed")
    rows = []
    for rep in reports:
        for row in rep.rows:
            rows.append(
                (
                    rep.alpha,
                    rep.beta,
                    float(row.radius),
                    None if row.q is None else float(row.q),
                    None if row.Q is None else float(row.Q),
                    row.strategy,
                    bool(row.landed),
                )
            )
    return header, rows


def cascade_rows(certificate):
    """Certificate cascade: stored induction rows for every tested radius."""
    header = ("r", "k", "t_lower", "ell_lower", "crossing_budget", "actual_time")
    rows = []
    for r in sorted(certificate.rows):
        for row in certificate.rows[r]:
            rows.append(
                (
                    float(r),
                    int(row.k),
                    float(row.t_lower),
                    float(row.ell_lower),
                    float(row.crossing_budget),
                    None if row.actual_time is None else float(row.actual_time),
                )
            )
    return header, rows


def decomposition_rows(path_id: int, labels: Sequence[str], decomposition):
    """Deep/transition status per path vertex."""
    header = ("path", "index", "vertex", "status", "peripheral", "coset")
    deep = decomposition.deep_indices
    rows = []
    for i, label in enumerate(labels):
        if i in deep:
            iv = decomposition.interval_of(i)
            rows.append((path_id, i, label, "deep", iv.peripheral, iv.coset_id))
        else:
            rows.append((path_id, i, label, "transition", None, None))
    return header, rows


def classification_rows(records):
    """Defining-graph classification results."""
    header = ("name", "verdict", "cfs", "standing_pass", "planar_1skeleton", "caveats")
    rows = []
    for rec in records:
        rows.append(
            (
                rec.name,
                rec.verdict,
                rec.cfs,
                rec.standing.all_pass,
                rec.planar_1skeleton,
                "; ".join(rec.caveats),
            )
        )
    return header, rows


def poset_rows(names: Sequence[str], relation):
    """Pairwise order relation: one row per ordered pair."""
    header = ("alpha", "beta", "alpha_leq_beta")
    rows = []
    for a in names:
        for b in names:
            if a == b:
                continue
            rows.append((a, b, bool(relation(a, b))))
    return header, rows


# ---------------------------------------------------------------------------
# SVG renderers.  Fixed 640x480 canvas, deterministic element order.
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H = 640, 480


def _svg_document(elements: Sequence[str]) -> str:
    body = "\n".join(elements)
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{_SVG_W}" height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">\n'
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="white"/>\n'
        f"{body}\n</svg>\n"
    )


def hasse_svg(path: str, classes: Sequence[Sequence[str]], edges: Sequence[tuple],
              top: Optional[int] = None) -> None:
    """Draw the Hasse diagram of a partial order on equivalence classes.

    ``classes`` lists each class as a sequence of member names; ``edges`` are
    (lower, upper) index pairs of the covering relation.  Layout is layered:
    a node's layer is the longest chain below it, the top element (if given)
    is forced to the highest layer, and nodes within a layer are ordered by
    their smallest member name.
    """
    n = len(classes)
    depth = [0] * n
    # longest-path layering over the (acyclic) covering relation
    changed = True
    guard = 0
    while changed and guard <= n + 1:
        changed = False
        guard += 1
        for lo, hi in edges:
            if depth[hi] < depth[lo] + 1:
                depth[hi] = depth[lo] + 1
                changed = True
    max_depth = max(depth) if n else 0
    if top is not None and n:
        depth[top] = max(max_depth, depth[top])
        max_depth = max(depth)
    layers: dict[int, list[int]] = {}
    for i in range(n):
        layers.setdefault(depth[i], []).append(i)
    for d in layers:
        layers[d].sort(key=lambda i: min(classes[i]))
    pos = {}
    for d in sorted(layers):
        row = layers[d]
        y = _SVG_H - 60 - (d * (_SVG_H - 120) / max(max_depth, 1))
        for j, i in enumerate(row):
            x = (j + 1) * _SVG_W / (len(row) + 1)
            pos[i] = (x, y)
    elements = []
    for lo, hi in sorted(edges):
        (x1, y1), (x2, y2) = pos[lo], pos[hi]
        elements.append(
            f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" '
            'stroke="black" stroke-width="1.5"/>'
        )
    for i in sorted(pos):
        x, y = pos[i]
        label = ",".join(sorted(classes[i]))
        elements.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="5" fill="black"/>')
        elements.append(
            f'<text x="{x:.1f}" y="{y - 10:.1f}" font-size="13" '
            f'text-anchor="middle" font-family="monospace">{label}</text>'
        )
    with open(path, "w") as fh:
        fh.write(_svg_document(elements))


def chart_strip_svg(path: str, template, spiral=None, max_charts: int = 12) -> None:
    """Draw the leading charts side by side with an optional path overlay.

    Even charts are walls (drawn at a fixed nominal width), odd charts are
    strips (width proportional to the strip width, clipped for display); a
    piecewise path is overlaid chart by chart.  This is a schematic, not an
    isometric picture, but it is deterministic.
    """
    n_charts = min(max_charts, template.n_charts)
    widths = []
    for c in range(n_charts):
        if c % 2 == 0:
            widths.append(2.0)  # nominal display width for a wall chart
        else:
            widths.append(min(max(float(template.widths[c // 2]), 0.5), 20.0))
    total = sum(widths)
    scale = (_SVG_W - 40) / total
    height = _SVG_H - 80
    elements = []
    x_cursor = 20.0
    x_left = []
    for c in range(n_charts):
        w_px = widths[c] * scale
        x_left.append(x_cursor)
        fill = "#e8e8f8" if c % 2 == 0 else "#f8ece0"
        elements.append(
            f'<rect x="{x_cursor:.1f}" y="40" width="{w_px:.1f}" height="{height:.1f}" '
            f'fill="{fill}" stroke="black" stroke-width="0.5"/>'
        )
        elements.append(
            f'<text x="{x_cursor + w_px / 2:.1f}" y="30" font-size="11" '
            f'text-anchor="middle" font-family="monospace">c{c}</text>'
        )
        x_cursor += w_px
    if spiral is not None:
        p = spiral.path if hasattr(spiral, "path") else spiral
        v_max = max(max(abs(float(v.xy[1])) for v in p.vertices), 1.0)
        pts = []
        for v in p.vertices:
            c = int(v.chart)
            if c >= n_charts:
                break
            u = min(max(float(v.xy[0]), 0.0), widths[c])
            x = x_left[c] + u * scale
            y = 40 + height - (min(abs(float(v.xy[1])), v_max) / v_max) * height
            pts.append(f"{x:.1f},{y:.1f}")
        if len(pts) >= 2:
            elements.append(
                f'<polyline points="{" ".join(pts)}" fill="none" '
                'stroke="crimson" stroke-width="1.5"/>'
            )
    with open(path, "w") as fh:
        fh.write(_svg_document(elements))
