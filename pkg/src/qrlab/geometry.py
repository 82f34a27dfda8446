"""Chart-tagged points and the minimal geometry protocol used by paths.

A *chart* is a copy of a Euclidean plane (or a strip inside one).  Points
carry the id of the chart they live in plus Cartesian coordinates in that
chart's frame.  Path machinery only needs a geometry object that can
measure straight segments between chart points and interpolate along them;
``PlaneGeometry`` is the trivial single-chart model, ``Template`` (in
``templates``) is the glued multi-chart model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChartPoint:
    """A point given by chart id and coordinates in that chart's frame."""

    chart: int
    xy: np.ndarray

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float)
        if self.xy.shape != (2,):
            raise ValueError("ChartPoint coordinates must be a 2-vector")

    def __repr__(self):  # compact, deterministic
        return f"ChartPoint({self.chart}, [{self.xy[0]:.9g}, {self.xy[1]:.9g}])"


class PlaneGeometry:
    """A single Euclidean plane, chart id 0.  The trivial geometry."""

    def segment_length(self, p: ChartPoint, q: ChartPoint) -> float:
        if p.chart != q.chart:
            raise ValueError("PlaneGeometry has a single chart")
        return float(np.linalg.norm(p.xy - q.xy))

    def lerp(self, p: ChartPoint, q: ChartPoint, f: float) -> ChartPoint:
        if p.chart != q.chart:
            raise ValueError("PlaneGeometry has a single chart")
        return ChartPoint(p.chart, (1.0 - f) * p.xy + f * q.xy)

    def distance(self, p: ChartPoint, q: ChartPoint) -> float:
        return self.segment_length(p, q)

    def distance_many(self, ps, qs) -> np.ndarray:
        a = np.array([p.xy for p in ps])
        b = np.array([q.xy for q in qs])
        return np.linalg.norm(a - b, axis=1)

    def same_point(self, p: ChartPoint, q: ChartPoint, tol: float = 1e-9) -> bool:
        return p.chart == q.chart and bool(np.all(np.abs(p.xy - q.xy) <= tol))


PLANE = PlaneGeometry()


def plane_point(x: float, y: float) -> ChartPoint:
    return ChartPoint(0, np.array([float(x), float(y)]))
