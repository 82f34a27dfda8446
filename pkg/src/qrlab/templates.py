"""Piecewise-Euclidean templates and their intrinsic geometry.

A template is a chain of Euclidean planes (*walls* F_0 .. F_n) glued to
Euclidean strips (S_0 .. S_{n-1}) along complete geodesic lines:

    F_0 | S_0 | F_1 | S_1 | ... | S_{n-1} | F_n

Charts are indexed left to right: wall i is chart ``2i``, strip i is chart
``2i + 1``.  Gluing line ``j`` separates charts ``j`` and ``j + 1``.  Wall
frames put the origin at the distinguished point p_i (the intersection of
the wall's two gluing lines for interior walls, the foot of the single
gluing line for the boundary walls); the near gluing line f_i^- is the
v-axis, and the far line f_i^+ leaves p_i at the wall's angle.  Strip i is
the rectangle [0, delta_i] x R; its near edge matches f_i^+ and its far
edge is glued to f_{i+1}^- after applying the strip's shear offset o_i and
orientation eps_i.

Because every chart is convex in the glued space, a geodesic between two
points crosses each intermediate gluing line exactly once and is straight
in between.  Distances are therefore computed by minimizing the sum of
per-chart Euclidean leg lengths over one scalar crossing coordinate per
gluing line -- a convex objective, solved here by a damped Newton method
on a smoothed surrogate with an epsilon-homotopy (and a derivative-free
per-coordinate fallback for stragglers).  An independent mesh-Dijkstra
oracle is provided for cross-validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import QRLabError
from .geometry import ChartPoint
from .paths import PolyPath, fit_symmetric_constant

__all__ = [
    "Template",
    "PChainStats",
    "build_template",
    "standard_template_from_itinerary",
    "random_template",
    "mesh_oracle_distance",
    "p_chain_stats",
    "template_from_json",
]

_TRANSFER_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Template:
    """An immutable wall-and-strip chain with its intrinsic metric.

    ``widths[i]`` is the strip width delta_i >= 0 (zero-width strips are
    admitted and contribute |shift| legs), ``offsets[i]`` the signed shear
    between the images of p_i and p_{i+1} along the gluing direction,
    ``orientations[i]`` in {+1, -1} the gluing orientation, ``angles[i-1]``
    the angle of interior wall i between its two gluing lines, and ``beta``
    the declared pinch with all angles in [beta, pi - beta].  When a
    template was produced by width compression, ``true_widths`` retains
    the pre-compression widths.
    """

    widths: np.ndarray
    offsets: np.ndarray
    orientations: np.ndarray
    angles: np.ndarray
    beta: float
    true_widths: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "orientations", np.asarray(self.orientations, dtype=int))
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.true_widths is not None:
            object.__setattr__(self, "true_widths", np.asarray(self.true_widths, dtype=float))
        n = len(self.widths)
        # far-line directions e_i^+ per wall; the boundary wall n has none.
        eplus = np.zeros((n + 1, 2))
        eplus[0] = (0.0, 1.0)
        for i in range(1, n):
            th = self.angles[i - 1]
            eplus[i] = (math.sin(th), math.cos(th))
        object.__setattr__(self, "_eplus", eplus)
        object.__setattr__(self, "_span_cache", {})

    # -- combinatorics -------------------------------------------------------

    @property
    def n_strips(self) -> int:
        return len(self.widths)

    @property
    def n_walls(self) -> int:
        return self.n_strips + 1

    @property
    def n_charts(self) -> int:
        return 2 * self.n_strips + 1

    @property
    def n_lines(self) -> int:
        return 2 * self.n_strips

    @property
    def right_angled(self) -> bool:
        return bool(np.all(np.abs(self.angles - math.pi / 2) <= 1e-12))

    @property
    def w(self) -> np.ndarray:
        """Distances w_i = d(p_i, p_{i+1}) = sqrt(delta_i^2 + o_i^2)."""
        return np.hypot(self.widths, self.offsets)

    @staticmethod
    def wall_chart(i: int) -> int:
        return 2 * i

    @staticmethod
    def strip_chart(i: int) -> int:
        return 2 * i + 1

    def is_wall_chart(self, chart: int) -> bool:
        return chart % 2 == 0

    # -- points --------------------------------------------------------------

    def wall_point(self, i: int, u: float, v: float) -> ChartPoint:
        return ChartPoint(self.wall_chart(i), np.array([float(u), float(v)]))

    def strip_point(self, i: int, x: float, y: float) -> ChartPoint:
        return ChartPoint(self.strip_chart(i), np.array([float(x), float(y)]))

    def p_point(self, i: int) -> ChartPoint:
        """The distinguished point p_i (origin of wall i), i = 0..n."""
        if not 0 <= i <= self.n_strips:
            raise ValueError(f"p-point index {i} out of range 0..{self.n_strips}")
        return ChartPoint(self.wall_chart(i), np.zeros(2))

    def base_point(self) -> ChartPoint:
        return self.p_point(0)

    def zeta_point(self, t: float) -> ChartPoint:
        """The point zeta(t) of the main flat ray along f_0^+ in the base wall."""
        return ChartPoint(0, np.array([0.0, float(t)]))

    def contains(self, p: ChartPoint, tol: float = 1e-9) -> bool:
        if not 0 <= p.chart < self.n_charts:
            return False
        if self.is_wall_chart(p.chart):
            return True
        delta = self.widths[(p.chart - 1) // 2]
        return -tol <= p.xy[0] <= delta + tol

    # -- gluing-line frames ----------------------------------------------------

    def _line_frame(self, j: int, chart: int):
        """(origin, unit direction) of gluing line j in an adjacent chart."""
        if j % 2 == 0:
            i = j // 2  # f_i^+ = near edge of strip i
            if chart == j:  # wall i
                return np.zeros(2), self._eplus[i]
            if chart == j + 1:  # strip i
                return np.zeros(2), np.array([0.0, 1.0])
        else:
            i = (j - 1) // 2  # far edge of strip i = f_{i+1}^-
            if chart == j:  # strip i
                return np.array([self.widths[i], 0.0]), np.array([0.0, 1.0])
            if chart == j + 1:  # wall i + 1
                return np.array([0.0, self.offsets[i]]), np.array(
                    [0.0, float(self.orientations[i])]
                )
        raise ValueError(f"line {j} does not border chart {chart}")

    def line_anchor_param(self, j: int) -> float:
        """Line parameter of the p-point sitting on line j (p_i or p_{i+1})."""
        if j % 2 == 0:
            return 0.0
        i = (j - 1) // 2
        return float(-self.orientations[i] * self.offsets[i])

    def line_point(self, j: int, t: float, chart: Optional[int] = None) -> ChartPoint:
        """The point of gluing line j at parameter t, in a chosen adjacent chart."""
        c = j if chart is None else chart
        o, d = self._line_frame(j, c)
        return ChartPoint(c, o + float(t) * d)

    def _on_line_param(self, j: int, chart: int, xy: np.ndarray, tol: float):
        o, d = self._line_frame(j, chart)
        t = float(np.dot(xy - o, d))
        if np.max(np.abs(xy - (o + t * d))) <= tol:
            return t
        return None

    # -- point transfer across charts -------------------------------------------

    def realize(self, p: ChartPoint, chart: int, tol: float = _TRANSFER_TOL):
        """Coordinates of p in a target chart, hopping along gluing lines.

        Returns None when the point does not lie on every gluing line
        between its own chart and the target (within ``tol``).
        """
        if not 0 <= chart < self.n_charts or not 0 <= p.chart < self.n_charts:
            raise ValueError("chart index out of range")
        c, xy = p.chart, np.asarray(p.xy, dtype=float)
        while c != chart:
            step = 1 if chart > c else -1
            j = c if step == 1 else c - 1
            t = self._on_line_param(j, c, xy, tol)
            if t is None:
                return None
            c += step
            o, d = self._line_frame(j, c)
            xy = o + t * d
        return xy

    def canonical(self, p: ChartPoint, tol: float = 1e-9) -> ChartPoint:
        """The representation of p in the lowest chart containing it."""
        c, xy = p.chart, np.asarray(p.xy, dtype=float)
        while c > 0:
            param = self._on_line_param(c - 1, c, xy, tol)
            if param is None:
                break
            c -= 1
            o, d = self._line_frame(c, c)
            xy = o + param * d
        return ChartPoint(c, xy)

    def _common_chart(self, a: ChartPoint, b: ChartPoint, tol: float = _TRANSFER_TOL):
        if a.chart == b.chart:
            return a.chart, a.xy, b.xy
        lo, hi = min(a.chart, b.chart), max(a.chart, b.chart)
        for c in range(lo, hi + 1):
            ra = self.realize(a, c, tol)
            if ra is None:
                continue
            rb = self.realize(b, c, tol)
            if rb is not None:
                return c, ra, rb
        return None

    # -- geometry protocol (used by PolyPath) -----------------------------------

    def segment_length(self, a: ChartPoint, b: ChartPoint) -> float:
        got = self._common_chart(a, b)
        if got is None:
            raise ValueError(
                f"segment between charts {a.chart} and {b.chart} is not "
                "realizable inside a single chart"
            )
        _, ra, rb = got
        return float(np.linalg.norm(ra - rb))

    def lerp(self, a: ChartPoint, b: ChartPoint, f: float) -> ChartPoint:
        got = self._common_chart(a, b)
        if got is None:
            raise ValueError("cannot interpolate across non-adjacent charts")
        c, ra, rb = got
        return ChartPoint(c, (1.0 - f) * ra + f * rb)

    def same_point(self, a: ChartPoint, b: ChartPoint, tol: float = 1e-9) -> bool:
        got = self._common_chart(a, b, tol=max(tol, _TRANSFER_TOL))
        if got is None:
            return False
        _, ra, rb = got
        return bool(np.max(np.abs(ra - rb)) <= tol)

    # -- convex distance solver ---------------------------------------------------

    def _span_arrays(self, ca: int, cb: int) -> dict:
        """Per-leg affine data for the crossing objective on charts ca..cb."""
        key = (ca, cb)
        hit = self._span_cache.get(key)
        if hit is not None:
            return hit
        m = cb - ca
        D = np.zeros((m + 1, 2))
        E = np.zeros((m + 1, 2))
        Cmid = np.zeros((m + 1, 2))
        anchors = np.zeros(m)
        for k in range(m + 1):
            chart = ca + k
            if k <= m - 1:
                oD, dD = self._line_frame(ca + k, chart)
                D[k] = dD
                Cmid[k] += oD
                anchors[k] = self.line_anchor_param(ca + k)
            if k >= 1:
                oE, dE = self._line_frame(ca + k - 1, chart)
                E[k] = dE
                Cmid[k] -= oE
        data = {
            "m": m,
            "D": D,
            "E": E,
            "Cmid": Cmid,
            "anchors": anchors,
            "DD": (D * D).sum(1),
            "EE": (E * E).sum(1),
            "DE": (D * E).sum(1),
        }
        self._span_cache[key] = data
        return data

    def _staircase_init(self, ca: int, cb: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Crossing-parameter initialization by projecting the endpoints
        line-by-line across the span (averaged from both ends).

        Keeps the Newton start at the coordinate scale of the endpoints,
        which matters when those coordinates dwarf the gluing offsets.
        """
        m = cb - ca
        Tf = np.empty((X.shape[0], m))
        P = X.astype(float, copy=True)
        for k in range(m):
            o, d = self._line_frame(ca + k, ca + k)
            Tf[:, k] = (P - o) @ d
            o2, d2 = self._line_frame(ca + k, ca + k + 1)
            P = o2 + Tf[:, k : k + 1] * d2
        Tb = np.empty_like(Tf)
        P = Y.astype(float, copy=True)
        for k in range(m - 1, -1, -1):
            o2, d2 = self._line_frame(ca + k, ca + k + 1)
            Tb[:, k] = (P - o2) @ d2
            o, d = self._line_frame(ca + k, ca + k)
            P = o + Tb[:, k : k + 1] * d
        return 0.5 * (Tf + Tb)

    @staticmethod
    def _legs(C, D, E, T):
        P, m = T.shape
        z = np.zeros((P, 1))
        Tpad = np.concatenate([T, z], axis=1)
        Tprev = np.concatenate([z, T], axis=1)
        return C + Tpad[:, :, None] * D[None] - Tprev[:, :, None] * E[None]

    @classmethod
    def _exact_objective(cls, C, D, E, T):
        r = cls._legs(C, D, E, T)
        return np.sqrt((r * r).sum(-1)).sum(-1)

    @staticmethod
    def _smoothed(r, eps):
        return np.sqrt((r * r).sum(-1) + eps[:, None] ** 2)

    def _newton_stage(self, C, data, T, eps, max_iter=60):
        """Damped Newton on the eps-smoothed objective; returns (T, converged)."""
        D, E = data["D"], data["E"]
        DD, EE, DE = data["DD"], data["EE"], data["DE"]
        m = data["m"]
        P = T.shape[0]
        dii = np.arange(m)
        F = self._smoothed(self._legs(C, D, E, T), eps).sum(-1)
        converged = np.zeros(P, dtype=bool)
        for _ in range(max_iter):
            r = self._legs(C, D, E, T)
            s = self._smoothed(r, eps)
            rD = (r * D[None]).sum(-1)
            rE = (r * E[None]).sum(-1)
            g = rD[:, :m] / s[:, :m] - rE[:, 1:] / s[:, 1:]
            hD = DD[None, :m] / s[:, :m] - rD[:, :m] ** 2 / s[:, :m] ** 3
            hE = EE[None, 1:] / s[:, 1:] - rE[:, 1:] ** 2 / s[:, 1:] ** 3
            Hd = hD + hE
            H = np.zeros((P, m, m))
            H[:, dii, dii] = Hd + 1e-13 * (1.0 + np.abs(Hd).max(axis=1, keepdims=True))
            if m > 1:
                mid = slice(1, m)
                cross = -(
                    DE[None, mid] / s[:, mid] - rD[:, mid] * rE[:, mid] / s[:, mid] ** 3
                )
                H[:, dii[:-1], dii[1:]] = cross
                H[:, dii[1:], dii[:-1]] = cross
            try:
                step = -np.linalg.solve(H, g[..., None])[..., 0]
            except np.linalg.LinAlgError:  # pragma: no cover - PSD + ridge
                H[:, dii, dii] += 1e-8 * (1.0 + np.abs(Hd).max())
                step = -np.linalg.solve(H, g[..., None])[..., 0]
            dec = -(g * step).sum(-1)
            active = ~converged & (dec > 1e-18 * np.maximum(F, 1.0))
            if not active.any():
                converged[:] = True
                break
            alpha = np.ones(P)
            Tn = T + alpha[:, None] * step
            Fn = self._smoothed(self._legs(C, D, E, Tn), eps).sum(-1)
            bad = active & (Fn > F - 1e-4 * alpha * dec)
            for _ in range(50):
                if not bad.any():
                    break
                alpha[bad] *= 0.5
                Tn[bad] = T[bad] + alpha[bad, None] * step[bad]
                Fn[bad] = self._smoothed(
                    self._legs(C[bad], D, E, Tn[bad]), eps[bad]
                ).sum(-1)
                bad = bad & (Fn > F - 1e-4 * alpha * dec)
            improved = active & (Fn <= F)
            T = np.where(improved[:, None], Tn, T)
            newF = np.where(improved, Fn, F)
            converged |= active & (F - newF <= 1e-15 * np.maximum(F, 1.0))
            F = newF
        return T, converged

    def _golden_polish(self, C_row, data, t_row, sweeps=40):
        """Per-coordinate exact minimization for a single pair (fallback)."""
        D, E, m = data["D"], data["E"], data["m"]
        T = t_row.copy()

        def full(Tv):
            return float(self._exact_objective(C_row[None], D, E, Tv[None])[0])

        best = full(T)
        for _ in range(sweeps):
            moved = False
            for j in range(m):
                def f(t):
                    Tv = T.copy()
                    Tv[j] = t
                    return full(Tv)

                span = 1.0 + abs(T[j])
                res = optimize.minimize_scalar(
                    f,
                    bounds=(T[j] - span, T[j] + span),
                    method="bounded",
                    options={"xatol": 1e-12},
                )
                if res.fun < best - 1e-15 * max(best, 1.0):
                    T[j] = float(res.x)
                    best = float(res.fun)
                    moved = True
            if not moved:
                break
        return T

    def _solve_span(self, ca: int, cb: int, X: np.ndarray, Y: np.ndarray):
        """Minimize the crossing objective for a batch of pairs on one span.

        X, Y are (P, 2) coordinate arrays in charts ca and cb (ca < cb).
        Returns (distances (P,), crossing parameters (P, m)).
        """
        data = self._span_arrays(ca, cb)
        m = data["m"]
        P = X.shape[0]
        C = np.tile(data["Cmid"], (P, 1, 1))
        C[:, 0] -= X
        C[:, m] += Y
        # The objective is 1-homogeneous in (C, T); normalizing each pair to
        # unit coordinate scale keeps the Newton iteration well conditioned
        # regardless of how large the endpoint coordinates are.
        sigma = np.maximum(1.0, np.abs(C).max(axis=(1, 2)))
        Cn = C / sigma[:, None, None]
        T = self._staircase_init(ca, cb, X, Y) / sigma[:, None]
        scale = np.maximum(self._exact_objective(Cn, data["D"], data["E"], T), 1e-9)
        ok = np.ones(P, dtype=bool)
        for eps_rel in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12):
            T, ok = self._newton_stage(Cn, data, T, eps_rel * scale)
        if not ok.all():
            for p in np.flatnonzero(~ok):
                T[p] = self._golden_polish(Cn[p], data, T[p])
        T = T * sigma[:, None]
        d = self._exact_objective(C, data["D"], data["E"], T)
        return d, T

    def distance_many(self, xs: Sequence[ChartPoint], ys: Sequence[ChartPoint]) -> np.ndarray:
        """Intrinsic distances for aligned lists of points (batched by span)."""
        if len(xs) != len(ys):
            raise ValueError("point lists must have equal length")
        n = len(xs)
        out = np.empty(n)
        cx = [self.canonical(p) for p in xs]
        cy = [self.canonical(p) for p in ys]
        groups: dict = {}
        for k in range(n):
            a, b = cx[k], cy[k]
            if a.chart > b.chart:
                a, b = b, a
            groups.setdefault((a.chart, b.chart), []).append((k, a.xy, b.xy))
        for (ca, cb), items in groups.items():
            idx = np.array([it[0] for it in items])
            X = np.array([it[1] for it in items])
            Y = np.array([it[2] for it in items])
            if ca == cb:
                out[idx] = np.linalg.norm(X - Y, axis=1)
            else:
                d, _ = self._solve_span(ca, cb, X, Y)
                out[idx] = d
        return out

    def distance(self, x: ChartPoint, y: ChartPoint) -> float:
        return float(self.distance_many([x], [y])[0])

    def geodesic(self, x: ChartPoint, y: ChartPoint) -> PolyPath:
        """The geodesic from x to y as a PolyPath (straight in each chart)."""
        a = self.canonical(x)
        b = self.canonical(y)
        flip = a.chart > b.chart
        if flip:
            a, b = b, a
        if a.chart == b.chart:
            verts = [b, a] if flip else [a, b]
            return PolyPath(self, verts)
        _, T = self._solve_span(a.chart, b.chart, a.xy[None], b.xy[None])
        verts = [a]
        for k in range(b.chart - a.chart):
            verts.append(self.line_point(a.chart + k, float(T[0, k]), chart=a.chart + k))
        verts.append(b)
        if flip:
            verts = verts[::-1]
        return PolyPath(self, verts)

    # -- serialization -------------------------------------------------------------

    def to_json_dict(self) -> dict:
        doc = {
            "strips": [
                {
                    "width": float(self.widths[i]),
                    "offset": float(self.offsets[i]),
                    "orientation": int(self.orientations[i]),
                }
                for i in range(self.n_strips)
            ],
            "angles": [float(a) for a in self.angles],
            "beta": float(self.beta),
        }
        if self.true_widths is not None:
            doc["true_widths"] = [float(v) for v in self.true_widths]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, Template):
            return NotImplemented
        same_tw = (
            (self.true_widths is None and other.true_widths is None)
            or (
                self.true_widths is not None
                and other.true_widths is not None
                and np.array_equal(self.true_widths, other.true_widths)
            )
        )
        return (
            np.array_equal(self.widths, other.widths)
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.orientations, other.orientations)
            and np.array_equal(self.angles, other.angles)
            and self.beta == other.beta
            and same_tw
        )

    def __repr__(self):
        kind = "right-angled " if self.right_angled else ""
        return f"Template({kind}{self.n_strips} strips, widths {np.round(self.widths, 4)})"


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_template(
    widths,
    offsets=None,
    orientations=None,
    angles=None,
    beta: Optional[float] = None,
    true_widths=None,
) -> Template:
    """Validate template data and construct the immutable Template.

    ``angles`` covers the interior walls 1..n-1 (a scalar is broadcast);
    angles outside the open interval (0, pi) -- parallel gluing lines --
    or outside the declared pinch [beta, pi - beta] raise ``degenerate-wall``.
    """
    widths = np.asarray(widths, dtype=float)
    n = len(widths)
    if n < 1:
        raise ValueError("a template needs at least one strip")
    if np.any(widths < 0):
        raise ValueError("strip widths must be nonnegative")
    offsets = np.zeros(n) if offsets is None else np.asarray(offsets, dtype=float)
    if orientations is None:
        orientations = np.ones(n, dtype=int)
    else:
        orientations = np.asarray(orientations, dtype=int)
        if np.any(np.abs(orientations) != 1):
            raise ValueError("orientations must be +1 or -1")
    if angles is None:
        angles = np.full(max(n - 1, 0), math.pi / 2)
    else:
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if angles.size == 1 and n - 1 != 1:
            angles = np.full(max(n - 1, 0), float(angles[0]))
    if len(offsets) != n or len(orientations) != n or len(angles) != max(n - 1, 0):
        raise ValueError("widths, offsets, orientations, angles have inconsistent lengths")
    if np.any(angles <= 0) or np.any(angles >= math.pi):
        raise QRLabError(
            "degenerate-wall",
            "an interior wall's gluing lines are parallel (angle 0 or pi)",
        )
    if beta is None:
        beta = math.pi / 2 if len(angles) == 0 else float(
            min(np.minimum(angles, math.pi - angles))
        )
    if beta <= 0:
        raise QRLabError("degenerate-wall", "angle pinch beta must be positive")
    if np.any(angles < beta - 1e-12) or np.any(angles > math.pi - beta + 1e-12):
        raise QRLabError(
            "degenerate-wall",
            f"angles escape the declared pinch [beta, pi - beta] with beta={beta}",
        )
    return Template(
        widths=widths,
        offsets=offsets,
        orientations=orientations,
        angles=angles,
        beta=float(beta),
        true_widths=None if true_widths is None else np.asarray(true_widths, dtype=float),
    )


def standard_template_from_itinerary(
    widths, offsets=None, orientations=None, angles=None, beta: Optional[float] = None
) -> Template:
    """Template with widths below 1 compressed to exactly 1.

    Strips narrower than one unit are replaced by unit-width strips (the
    standard-template normalization); the requested widths are retained in
    ``true_widths`` whenever any compression happened.
    """
    widths = np.asarray(widths, dtype=float)
    effective = np.where(widths < 1.0, 1.0, widths)
    compressed = bool(np.any(widths < 1.0))
    return build_template(
        effective,
        offsets=offsets,
        orientations=orientations,
        angles=angles,
        beta=beta,
        true_widths=widths.copy() if compressed else None,
    )


def template_from_json(doc) -> Template:
    """Inverse of Template.to_json / to_json_dict (bit-exact round trip)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    strips = doc["strips"]
    return build_template(
        widths=[s["width"] for s in strips],
        offsets=[s["offset"] for s in strips],
        orientations=[s["orientation"] for s in strips],
        angles=np.asarray(doc["angles"], dtype=float)
        if doc.get("angles")
        else None,
        beta=doc.get("beta"),
        true_widths=doc.get("true_widths"),
    )


def random_template(
    rng: np.random.Generator,
    n: int,
    right_angled: bool = True,
    width_range=(0.5, 4.0),
    offset_range=(-2.0, 2.0),
    angle_pinch: float = 0.45,
) -> Template:
    """A random template, right-angled by default (test/experiment helper)."""
    widths = rng.uniform(width_range[0], width_range[1], size=n)
    offsets = rng.uniform(offset_range[0], offset_range[1], size=n)
    orientations = rng.choice(np.array([-1, 1]), size=n)
    if right_angled or n < 2:
        angles = np.full(max(n - 1, 0), math.pi / 2)
    else:
        angles = rng.uniform(angle_pinch, math.pi - angle_pinch, size=n - 1)
    return build_template(widths, offsets, orientations, angles)


# ---------------------------------------------------------------------------
# mesh oracle
# ---------------------------------------------------------------------------


def _interval_intersect(a, b):
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo <= hi else None


def _line_range_in_box(origin, direction, box):
    """Parameter interval of an affine line inside an axis-aligned box."""
    lo, hi = -math.inf, math.inf
    for ax in range(2):
        d = direction[ax]
        if abs(d) < 1e-14:
            if not (box[0][ax] - 1e-12 <= origin[ax] <= box[1][ax] + 1e-12):
                return None
            continue
        t0 = (box[0][ax] - origin[ax]) / d
        t1 = (box[1][ax] - origin[ax]) / d
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
    return (lo, hi) if lo <= hi else None


class _MeshGraph:
    """Accumulates nodes and weighted edges for the oracle graph."""

    def __init__(self):
        self.coords: list[np.ndarray] = []  # per chart block, for bookkeeping only
        self.n = 0
        self.ei: list[np.ndarray] = []
        self.ej: list[np.ndarray] = []
        self.ew: list[np.ndarray] = []

    def add_nodes(self, k: int) -> int:
        base = self.n
        self.n += k
        return base

    def add_edges(self, i, j, w):
        i = np.asarray(i, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        w = np.asarray(w, dtype=float).ravel()
        if len(i):
            self.ei.append(i)
            self.ej.append(j)
            self.ew.append(w)

    def matrix(self):
        i = np.concatenate(self.ei) if self.ei else np.zeros(0, dtype=np.int64)
        j = np.concatenate(self.ej) if self.ej else np.zeros(0, dtype=np.int64)
        w = np.concatenate(self.ew) if self.ew else np.zeros(0)
        m = coo_matrix((w, (i, j)), shape=(self.n, self.n))
        return m.tocsr()


def mesh_oracle_distance(
    t: Template,
    x: ChartPoint,
    y: ChartPoint,
    h: float,
    margin: Optional[float] = None,
    refine: int = 1,
    return_details: bool = False,
):
    """Grid-graph approximation of the intrinsic distance, solver-independent.

    Builds a per-chart lattice (8-neighbor connectivity) plus shared nodes on
    every gluing line between the two charts, runs Dijkstra, and straightens
    the resulting node path: same-chart runs collapse to exact chords while
    crossing coordinates stay on the discrete line grids and are improved by
    per-line convex snapping.  The straightened length is returned (the raw
    octile value is available in the details); it over-approximates the true
    distance and converges as h -> 0.

    ``margin`` defaults to an exact upper bound of d(x, y) computed along the
    p-point anchor chain; an explicit nonpositive margin, or one too small to
    connect the endpoints, raises ``oracle-box``.  ``refine`` multiplies the
    resolution while keeping grids nested (refine=2 yields a strict
    refinement of refine=1, for convergence monotonicity checks).
    """
    if h <= 0:
        raise ValueError("mesh spacing h must be positive")
    if refine < 1:
        raise ValueError("refine must be a positive integer")
    a = t.canonical(x)
    b = t.canonical(y)
    if a.chart > b.chart:
        a, b = b, a
    ca, cb = a.chart, b.chart
    lines = list(range(ca, cb))

    # exact upper bound along the anchor chain, also the default box margin
    chain = [a] + [t.line_point(j, t.line_anchor_param(j), chart=j) for j in lines] + [b]
    d_up = sum(t.segment_length(u, v) for u, v in zip(chain, chain[1:]))
    if margin is None:
        margin = d_up + h
    elif margin <= 0:
        raise QRLabError("oracle-box", "bounding-box margin must be positive")

    # per-chart axis-aligned boxes around the control points
    boxes = {}
    for c in range(ca, cb + 1):
        ctrl = []
        if c == ca:
            ctrl.append(a.xy)
        if c == cb:
            ctrl.append(b.xy)
        for j in (c - 1, c):
            if ca <= j < cb:
                ctrl.append(t.line_point(j, t.line_anchor_param(j), chart=c).xy)
        ctrl = np.array(ctrl)
        lo = ctrl.min(0) - margin
        hi = ctrl.max(0) + margin
        if not t.is_wall_chart(c):
            delta = t.widths[(c - 1) // 2]
            lo[0] = max(lo[0], 0.0)
            hi[0] = min(hi[0], delta)
        boxes[c] = (lo, hi)

    graph = _MeshGraph()
    lattice = {}  # chart -> (base id, pts array, tree, spacing)
    for c in range(ca, cb + 1):
        lo, hi = boxes[c]
        if t.is_wall_chart(c):
            nx = max(1, math.ceil((hi[0] - lo[0]) / h)) * refine
            xs = np.linspace(lo[0], hi[0], nx + 1)
        else:
            delta = hi[0] - lo[0]
            if delta <= 0:
                xs = np.array([lo[0]])
            else:
                nx = max(1, round(delta / h)) * refine
                xs = np.linspace(lo[0], hi[0], nx + 1)
        ny = max(1, math.ceil((hi[1] - lo[1]) / h)) * refine
        ys = np.linspace(lo[1], hi[1], ny + 1)
        hx = xs[1] - xs[0] if len(xs) > 1 else 0.0
        hy = ys[1] - ys[0] if len(ys) > 1 else 0.0
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        base = graph.add_nodes(len(pts))
        idx = base + np.arange(len(pts)).reshape(len(xs), len(ys))
        diag = math.hypot(hx, hy)
        if len(xs) > 1:
            graph.add_edges(idx[:-1, :], idx[1:, :], np.full(idx[:-1, :].size, hx))
        if len(ys) > 1:
            graph.add_edges(idx[:, :-1], idx[:, 1:], np.full(idx[:, :-1].size, hy))
        if len(xs) > 1 and len(ys) > 1:
            graph.add_edges(idx[:-1, :-1], idx[1:, 1:], np.full(idx[:-1, :-1].size, diag))
            graph.add_edges(idx[:-1, 1:], idx[1:, :-1], np.full(idx[:-1, 1:].size, diag))
        lattice[c] = (base, pts, cKDTree(pts), max(hx, hy, h / refine))

    # gluing-line nodes, shared by both adjacent charts
    line_nodes = {}  # j -> dict(params, base, left coords, right coords)
    for j in lines:
        oL, dL = t._line_frame(j, j)
        oR, dR = t._line_frame(j, j + 1)
        rngL = _line_range_in_box(oL, dL, boxes[j])
        rngR = _line_range_in_box(oR, dR, boxes[j + 1])
        rng = None if (rngL is None or rngR is None) else _interval_intersect(rngL, rngR)
        if rng is None or not np.isfinite(rng[0]) or not np.isfinite(rng[1]):
            raise QRLabError(
                "oracle-box", f"bounding box excludes gluing line {j}; enlarge margin"
            )
        nt = max(1, math.ceil((rng[1] - rng[0]) / h)) * refine
        params = np.linspace(rng[0], rng[1], nt + 1)
        base = graph.add_nodes(len(params))
        ptsL = oL[None] + params[:, None] * dL[None]
        ptsR = oR[None] + params[:, None] * dR[None]
        spacing = params[1] - params[0] if len(params) > 1 else 0.0
        if len(params) > 1:
            ids = base + np.arange(len(params))
            graph.add_edges(ids[:-1], ids[1:], np.full(len(params) - 1, spacing))
        line_nodes[j] = {"params": params, "base": base, "L": ptsL, "R": ptsR}
        for c, pts in ((j, ptsL), (j + 1, ptsR)):
            lbase, lpts, tree, sp = lattice[c]
            # the connector radius uses the base spacing h, not h/refine, so
            # a refined graph keeps every coarse connector edge and its
            # shortest raw path can only improve (nested-grid monotonicity)
            rad = 1.49 * max(sp, h)
            hits = tree.query_ball_point(pts, rad)
            li = np.concatenate(
                [np.full(len(hh), base + k) for k, hh in enumerate(hits)]
            ) if len(hits) else np.zeros(0, dtype=np.int64)
            lj = (
                np.concatenate([np.asarray(hh, dtype=np.int64) for hh in hits])
                if len(hits)
                else np.zeros(0, dtype=np.int64)
            )
            if len(li):
                wts = np.linalg.norm(pts[li - base] - lpts[lj], axis=1)
                graph.add_edges(li, lbase + lj, wts)

    # direct crossings for thin strips (the interior lattice is too sparse)
    for i in range(t.n_strips):
        c = t.strip_chart(i)
        jn, jf = 2 * i, 2 * i + 1
        if jn not in line_nodes or jf not in line_nodes:
            continue
        delta = t.widths[i]
        if delta >= 2 * h:
            continue
        S = line_nodes[jn]["params"]
        U = line_nodes[jf]["params"]
        win = max(4 * h, 2 * delta) + h
        lo = np.searchsorted(U, S - win)
        hi = np.searchsorted(U, S + win)
        counts = hi - lo
        rows = np.repeat(np.arange(len(S)), counts)
        cols = np.concatenate([np.arange(l, hh) for l, hh in zip(lo, hi)]) if counts.sum() else np.zeros(0, dtype=np.int64)
        if len(rows):
            wts = np.hypot(delta, S[rows] - U[cols])
            graph.add_edges(line_nodes[jn]["base"] + rows, line_nodes[jf]["base"] + cols, wts)

    # endpoint nodes
    endpoints = []
    for p in (a, b):
        nid = graph.add_nodes(1)
        endpoints.append(nid)
        lbase, lpts, tree, sp = lattice[p.chart]
        rad = 1.49 * max(sp, h)  # base-h radius: see the line-connector note
        hits = tree.query_ball_point(p.xy, rad)
        if hits:
            hits = np.asarray(hits, dtype=np.int64)
            graph.add_edges(
                np.full(len(hits), nid), lbase + hits,
                np.linalg.norm(lpts[hits] - p.xy[None], axis=1),
            )
        for j in (p.chart - 1, p.chart):
            if j in line_nodes:
                side = "L" if j == p.chart else "R"
                pts = line_nodes[j][side]
                dists = np.linalg.norm(pts - p.xy[None], axis=1)
                near = np.flatnonzero(dists <= rad)
                if len(near):
                    graph.add_edges(
                        np.full(len(near), nid), line_nodes[j]["base"] + near, dists[near]
                    )

    src, dst = endpoints
    mat = graph.matrix()
    dist, pred = dijkstra(
        mat, directed=False, indices=src, return_predecessors=True
    )
    raw = float(dist[dst])
    if not np.isfinite(raw):
        raise QRLabError("oracle-box", "grid graph is disconnected; enlarge margin")

    # reconstruct the node path and the first-touch crossing parameters
    order = []
    k = dst
    while k != src and k >= 0:
        order.append(k)
        k = pred[k]
    order.append(src)
    order.reverse()
    first_touch = {}
    for node in order:
        for j, info in line_nodes.items():
            if info["base"] <= node < info["base"] + len(info["params"]):
                if j not in first_touch:
                    first_touch[j] = float(info["params"][node - info["base"]])
                break

    if ca == cb:
        straight = float(np.linalg.norm(a.xy - b.xy))
        params = []
    else:
        data = t._span_arrays(ca, cb)
        m = data["m"]
        C = data["Cmid"].copy()
        C[0] -= a.xy
        C[m] += b.xy
        grids = [line_nodes[j]["params"] for j in lines]
        T = np.array(
            [first_touch.get(j, t.line_anchor_param(j)) for j in lines]
        )
        # snap each crossing to its discrete grid and sweep to a stable point
        def exact(Tv):
            return float(Template._exact_objective(C[None], data["D"], data["E"], Tv[None])[0])

        for _ in range(24):
            moved = False
            for jj in range(m):
                g = grids[jj]

                def local(tv):
                    Tv = T.copy()
                    Tv[jj] = tv
                    return exact(Tv)

                # the objective is convex in each coordinate and crossing
                # nodes only exist on the grid, so bounded minimization over
                # the grid span cannot mis-bracket
                res = optimize.minimize_scalar(
                    local, bounds=(float(g[0]), float(g[-1])), method="bounded"
                )
                tc = min(max(float(res.x), g[0]), g[-1])
                kk = int(np.searchsorted(g, tc))
                cands = {T[jj]}
                for cand_k in (kk - 1, kk, kk + 1):
                    if 0 <= cand_k < len(g):
                        cands.add(float(g[cand_k]))
                bestv = min(cands, key=local)
                if bestv != T[jj]:
                    T[jj] = bestv
                    moved = True
            if not moved:
                break
        straight = exact(T)
        params = [float(v) for v in T]

    if return_details:
        return straight, {
            "raw": raw,
            "straightened": straight,
            "n_nodes": graph.n,
            "n_edges": int(mat.nnz),
            "crossing_params": params,
            "upper_bound": d_up,
            "h": h / refine,
        }
    return straight


# ---------------------------------------------------------------------------
# p-chain statistics
# ---------------------------------------------------------------------------


@dataclass
class PChainStats:
    """The distinguished-point chain of a template with its fitted constants."""

    p_points: list
    w: np.ndarray
    mu_hat: float
    chain: PolyPath
    rho0: Optional[float] = None
    least_C: Optional[float] = None


def p_chain_stats(
    t: Template, rho0: Optional[float] = None, sample_step: Optional[float] = None
) -> PChainStats:
    """p-points, consecutive gaps w_i, and constants of the chain path.

    ``mu_hat`` is the least symmetric constant with the chain a
    (mu, mu)-quasi-geodesic (closed-form per pair, maximized over a pair
    grid).  With ``rho0`` given, ``least_C`` is the smallest C with
    w_i <= C (1 + rho0)^i, indexing the strips 0-based.
    """
    n = t.n_strips
    if n < 2:
        raise ValueError("the p-chain needs at least two strips")
    p_points = [t.p_point(i) for i in range(n + 1)]
    w = t.w
    verts = [t.strip_point(0, 0.0, 0.0)]
    for i in range(n):
        far_t = -t.orientations[i] * t.offsets[i]
        verts.append(t.strip_point(i, t.widths[i], far_t))
    chain = PolyPath(t, verts)
    if sample_step is None:
        sample_step = max(chain.length / 512.0, float(np.min(w[w > 0]) / 4.0) if np.any(w > 0) else 0.25)
    mu_hat = fit_symmetric_constant(chain, t.distance, sample_step)
    least_C = None
    if rho0 is not None:
        if rho0 <= 0:
            raise ValueError("rho0 must be positive")
        least_C = float(np.max(w / (1.0 + rho0) ** np.arange(n)))
    return PChainStats(
        p_points=p_points, w=w, mu_hat=mu_hat, chain=chain, rho0=rho0, least_C=least_C
    )
