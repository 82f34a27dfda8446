"""Polygonal paths, quasi-geodesic constant fitting, and path surgeries.

The universal carrier is :class:`PolyPath`: a finite chain of straight
segments through charts of a geometry (a plane or a glued template), with
arclength parametrization.  On top of it live

* :func:`qg_fit` — fit the multiplicative constant of the two-sided
  quasi-geodesic inequality over a pair grid,
* :func:`concat` / :func:`restrict` — chaining and ball restriction,
* the four surgery operations (nearest-point, ray-to-geodesic,
  segment-to-ray, fellow-travel), each returning the surgered path together
  with its contract constants, and
* :func:`transitivity_compose` — splicing a redirecting witness with a
  witness family toward a third ray.

All operations are pure; paths are treated as immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import QRLabError
from .geometry import ChartPoint, PlaneGeometry

__all__ = [
    "QGConstants",
    "PolyPath",
    "RestrictionMarks",
    "RedirectWitness",
    "qg_fit",
    "fit_symmetric_constant",
    "concat",
    "restrict",
    "bridge",
    "nearest_point_on_path",
    "nearest_point_surgery",
    "ray_to_geodesic_surgery",
    "segment_to_ray_surgery",
    "fellow_travel_surgery",
    "surgery",
    "transitivity_compose",
]

#: tolerance for endpoint matching in concatenation (length units)
ENDPOINT_TOL = 1e-9


@dataclass(frozen=True)
class QGConstants:
    """The pair (q, Q) of a quasi-geodesic: 1/q |t-s| - Q <= d <= q |t-s|."""

    q: float
    Q: float

    def __post_init__(self):
        if not (self.q >= 1.0):  # NaN fails too
            raise ValueError(f"multiplicative constant must be >= 1, got {self.q}")
        if not (self.Q >= 0.0):
            raise ValueError(f"additive constant must be >= 0, got {self.Q}")

    def dominates(self, other: "QGConstants", tol: float = 1e-9) -> bool:
        """True if these constants are at least as generous as ``other``."""
        return self.q + tol >= other.q and self.Q + tol >= other.Q

    def as_tuple(self) -> tuple:
        return (self.q, self.Q)

    def __repr__(self):
        return f"QGConstants(q={self.q:.9g}, Q={self.Q:.9g})"


class PolyPath:
    """A piecewise-straight path through charts, parametrized by arclength.

    ``vertices`` is an ordered list of :class:`ChartPoint`; each consecutive
    pair must be realizable as a straight segment inside a single chart (the
    geometry object decides, transferring gluing-line points between adjacent
    charts when needed).  Duplicate consecutive vertices are dropped so that
    cumulative arclength is strictly increasing.  The parametrization starts
    at ``start_time`` (concatenation shifts the second path's clock so that
    witness landing times remain meaningful).
    """

    __slots__ = ("geom", "vertices", "times", "_seglen")

    def __init__(self, geom, vertices: Sequence[ChartPoint], start_time: float = 0.0):
        self.geom = geom
        verts: list[ChartPoint] = []
        lens: list[float] = []
        for v in vertices:
            if verts:
                seg = geom.segment_length(verts[-1], v)
                if seg <= ENDPOINT_TOL:  # below the package length resolution
                    continue
                lens.append(seg)
            verts.append(v)
        if not verts:
            raise QRLabError("empty-path", "a path needs at least one vertex")
        self.vertices = verts
        self._seglen = np.asarray(lens, dtype=float)
        self.times = float(start_time) + np.concatenate(
            ([0.0], np.cumsum(self._seglen))
        )

    # -- basic accessors ---------------------------------------------------

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @property
    def start(self) -> ChartPoint:
        return self.vertices[0]

    @property
    def end(self) -> ChartPoint:
        return self.vertices[-1]

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return (
            f"PolyPath({len(self.vertices)} vertices, length {self.length:.6g}, "
            f"t in [{self.t_start:.6g}, {self.t_end:.6g}])"
        )

    # -- parametrization ---------------------------------------------------

    def segment_index(self, t: float) -> int:
        """Index i with times[i] <= t <= times[i+1] (clamped at the ends)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), max(len(self.vertices) - 2, 0))

    def point_at(self, t: float) -> ChartPoint:
        if t < self.t_start - 1e-9 or t > self.t_end + 1e-9:
            raise ValueError(f"time {t} outside [{self.t_start}, {self.t_end}]")
        if len(self.vertices) == 1:
            return self.vertices[0]
        i = self.segment_index(t)
        t0, t1 = self.times[i], self.times[i + 1]
        f = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
        f = min(max(f, 0.0), 1.0)
        return self.geom.lerp(self.vertices[i], self.vertices[i + 1], f)

    def points_at(self, ts: Iterable[float]) -> list[ChartPoint]:
        return [self.point_at(t) for t in ts]

    def sample_times(self, step: float) -> np.ndarray:
        """Vertex times plus a uniform grid at ``step``, sorted, deduplicated.

        Constant fitting is extremal at or near vertices for piecewise
        straight paths; the uniform grid bounds the residual error.
        """
        if step <= 0:
            raise ValueError("sample step must be positive")
        grid = np.arange(self.t_start, self.t_end, step)
        ts = np.unique(np.concatenate((self.times, grid, [self.t_end])))
        # collapse near-duplicates (vertex vs grid point within 1e-12)
        keep = np.concatenate(([True], np.diff(ts) > 1e-12))
        return ts[keep]

    # -- derived paths -------------------------------------------------------

    def subpath(self, t0: float, t1: float) -> "PolyPath":
        """The restriction to [t0, t1], keeping the parametrization offset."""
        if t1 < t0:
            raise ValueError("subpath needs t0 <= t1")
        t0 = max(t0, self.t_start)
        t1 = min(t1, self.t_end)
        first = self.segment_index(t0)
        last = self.segment_index(t1)
        pts = [self.point_at(t0)]
        for i in range(first + 1, last + 1):
            if self.times[i] > t0 and self.times[i] < t1:
                pts.append(self.vertices[i])
        pts.append(self.point_at(t1))
        return PolyPath(self.geom, pts, start_time=t0)

    def reverse(self) -> "PolyPath":
        return PolyPath(self.geom, list(reversed(self.vertices)), start_time=0.0)

    def shifted(self, dt: float) -> "PolyPath":
        return PolyPath(self.geom, self.vertices, start_time=self.t_start + dt)


@dataclass(frozen=True)
class RestrictionMarks:
    """First-exit and last-visit times of a path for the ball of radius r."""

    t_r: float
    T_r: float
    r: float

    def __post_init__(self):
        if not (0.0 <= self.t_r <= self.T_r + 1e-9):
            raise ValueError("restriction marks must satisfy 0 <= t_r <= T_r")


@dataclass
class RedirectWitness:
    """A concrete redirecting of one ray to another at a given radius.

    ``path`` agrees with the source ray on [0, prefix_time], leaves it after
    the ball of radius ``radius``, and lands on the target ray at
    ``landing_time`` (equal to the target's own time ``target_time`` at the
    landing point whenever the target is parametrized from the same base);
    past the landing point the witness follows the target.
    """

    radius: float
    path: PolyPath
    constants: QGConstants
    landing_time: float
    target_time: float
    prefix_time: float
    strategy: str = ""
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# constant fitting
# ---------------------------------------------------------------------------


def _metric_owner(metric):
    """The object whose bound method ``metric`` is, if any."""
    return getattr(metric, "__self__", None)


def pair_distances(metric, xs: Sequence[ChartPoint], ys: Sequence[ChartPoint]) -> np.ndarray:
    """Evaluate a metric callback on aligned point lists, batched when possible."""
    owner = _metric_owner(metric)
    many = getattr(owner, "distance_many", None) or getattr(metric, "distance_many", None)
    if many is not None:
        return np.asarray(many(xs, ys), dtype=float)
    return np.array([metric(x, y) for x, y in zip(xs, ys)], dtype=float)


def qg_fit(
    path: PolyPath,
    Q: float,
    distance: Callable[[ChartPoint, ChartPoint], float],
    sample_step: float,
) -> QGConstants:
    """Fit the least multiplicative constant q for a given additive Q.

    Samples the path at its vertices plus a uniform grid, evaluates the
    metric on all sample pairs, and returns the least q >= 1 with
    |t - s|/q - Q <= d(path(s), path(t)) on every pair.  The upper bound
    d <= |t - s| holds automatically for arclength parametrization and is
    checked; a violation means the callback is not the intrinsic metric
    of the space carrying the path, reported as ``bad-metric``.
    """
    if path.length <= 0:
        raise QRLabError("empty-path", "cannot fit constants of a zero-length path")
    if Q < 0:
        raise ValueError("additive constant must be >= 0")
    ts = path.sample_times(sample_step)
    pts = path.points_at(ts)
    n = len(ts)
    iu, ju = np.triu_indices(n, k=1)
    xs = [pts[i] for i in iu]
    ys = [pts[j] for j in ju]
    d = pair_distances(distance, xs, ys)
    if np.any(d < -1e-12):
        raise QRLabError("bad-metric", "distance callback returned a negative value")
    dt = ts[ju] - ts[iu]
    time_quantum = 8.0 * np.spacing(np.maximum(np.abs(ts[iu]), np.abs(ts[ju])))
    if np.any(d > dt + 1e-9 * np.maximum(1.0, dt) + time_quantum):
        worst = float(np.max(d - dt))
        raise QRLabError(
            "bad-metric",
            f"metric exceeds arclength by {worst:.3g}; callback is not the "
            "intrinsic metric for this path",
        )
    denom = d + Q
    with np.errstate(divide="ignore"):
        ratios = np.where(denom > 0, dt / np.maximum(denom, 1e-300), np.inf)
    # pairs at the float noise floor carry no constant information
    ratios = np.where(dt <= ENDPOINT_TOL, 1.0, ratios)
    q = float(max(1.0, ratios.max())) if len(ratios) else 1.0
    return QGConstants(q=q, Q=float(Q))


def fit_symmetric_constant(
    path: PolyPath,
    distance: Callable[[ChartPoint, ChartPoint], float],
    sample_step: float,
) -> float:
    """Least mu >= 1 such that the path is a (mu, mu)-quasi-geodesic.

    The lower bound |t-s|/mu - mu <= d solves to
    mu >= (-d + sqrt(d^2 + 4|t-s|))/2 per pair, so the least symmetric
    constant is the max of that closed form over the pair grid.
    """
    if path.length <= 0:
        raise QRLabError("empty-path", "cannot fit constants of a zero-length path")
    ts = path.sample_times(sample_step)
    pts = path.points_at(ts)
    iu, ju = np.triu_indices(len(ts), k=1)
    d = pair_distances(distance, [pts[i] for i in iu], [pts[j] for j in ju])
    if np.any(d < -1e-12):
        raise QRLabError("bad-metric", "distance callback returned a negative value")
    dt = ts[ju] - ts[iu]
    mu = 0.5 * (-d + np.sqrt(d * d + 4.0 * dt))
    return float(max(1.0, mu.max())) if len(mu) else 1.0


# ---------------------------------------------------------------------------
# concatenation and restriction
# ---------------------------------------------------------------------------


def concat(a: PolyPath, b: PolyPath) -> PolyPath:
    """Concatenate two paths whose endpoints match within 1e-9.

    The joint point is deduplicated and the second path's clock is shifted
    so the result is parametrized continuously from ``a.t_start`` (the
    reparametrization t + t1 - s2; landing times along ``a`` keep meaning).
    """
    if a.geom is not b.geom:
        raise ValueError("cannot concatenate paths over different geometries")
    gap = a.geom.segment_length(a.end, b.start) if _joinable(a, b) else np.inf
    if not (gap <= ENDPOINT_TOL):
        raise QRLabError(
            "disconnected-concat",
            f"terminal/initial points differ by {gap:.3g} (> {ENDPOINT_TOL})",
        )
    return PolyPath(a.geom, list(a.vertices) + list(b.vertices), start_time=a.t_start)


def _joinable(a: PolyPath, b: PolyPath) -> bool:
    try:
        a.geom.segment_length(a.end, b.start)
        return True
    except ValueError:
        return False


def _ball_crossing(path: PolyPath, norms, lo_t: float, hi_t: float, r: float) -> float:
    """Time t in [lo_t, hi_t] with d(path(t), base) = r, given a sign change.

    ``norms`` is the callable t -> distance to base; the distance is convex
    along each straight chart segment, so the bracketed root is unique.
    """
    f = lambda t: norms(t) - r
    return float(optimize.brentq(f, lo_t, hi_t, xtol=1e-12, rtol=1e-15))


def restrict(path: PolyPath, r: float, base: ChartPoint):
    """Split a path at the ball of radius r around ``base``.

    Returns ``(prefix, tail, marks)`` where the prefix ends at the first
    time the path reaches distance r from ``base`` and the tail starts at
    the last time it is within distance r.  Distance to a fixed point is
    convex along straight segments of a CAT(0) geometry, so segment maxima
    sit at vertices and interior dips are found by bounded scalar
    minimization.
    """
    if r <= 0:
        raise ValueError("restriction radius must be positive")
    geom = path.geom
    metric = geom.distance
    vnorm = pair_distances(metric, [base] * len(path.vertices), path.vertices)
    if vnorm[0] > 1e-6:
        raise ValueError("restrict expects a path starting at the base point")
    if vnorm.max() < r:
        raise QRLabError(
            "bounded-path",
            f"path stays at distance <= {vnorm.max():.6g} < r = {r} from base",
        )
    norm_at = lambda t: metric(base, path.point_at(t))

    # first time hitting distance r: segment maxima are at vertices, so the
    # first segment whose far vertex reaches r contains the crossing.
    k = int(np.argmax(vnorm >= r))
    if vnorm[k] >= r and k == 0:
        t_r = path.t_start
    else:
        t_r = _ball_crossing(path, norm_at, path.times[k - 1], path.times[k], r)

    # last time inside the closed ball: scan segments from the end; a convex
    # segment can dip below r even when both endpoint norms exceed it.
    T_r = None
    for i in range(len(path.vertices) - 2, -1, -1):
        lo, hi = float(path.times[i]), float(path.times[i + 1])
        if vnorm[i + 1] <= r:
            # far vertex inside the closed ball and every later time outside:
            # the last inside time is this segment's far end.
            T_r = hi
            break
        if vnorm[i] <= r:
            T_r = _ball_crossing(path, norm_at, lo, hi, r)
            break
        res = optimize.minimize_scalar(norm_at, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun <= r:  # interior dip of the convex segment profile
            T_r = _ball_crossing(path, norm_at, float(res.x), hi, r)
            break
    if T_r is None:  # pragma: no cover - guarded by vnorm.max() >= r and start at 0
        raise QRLabError("bounded-path", "no ball crossing found")

    T_r = max(T_r, t_r)
    prefix = path.subpath(path.t_start, t_r)
    tail = path.subpath(T_r, path.t_end)
    return prefix, tail, RestrictionMarks(t_r=t_r, T_r=T_r, r=r)


# ---------------------------------------------------------------------------
# bridges and nearest points
# ---------------------------------------------------------------------------


def bridge(geom, x: ChartPoint, y: ChartPoint, start_time: float = 0.0) -> PolyPath:
    """The geodesic from x to y as a PolyPath (a straight segment in a plane)."""
    builder = getattr(geom, "geodesic", None)
    if builder is not None:
        g = builder(x, y)
        return PolyPath(geom, g.vertices, start_time=start_time)
    return PolyPath(geom, [x, y], start_time=start_time)


def nearest_point_on_path(
    x: ChartPoint, path: PolyPath, coarse_step: Optional[float] = None
) -> tuple[float, ChartPoint, float]:
    """(time, point, distance) of a nearest point of the path to x.

    Distance to x is convex along each straight segment, so each segment
    minimum is found by bounded scalar minimization seeded from a coarse
    vertex scan; ties are broken toward the smaller path parameter.
    """
    geom = path.geom
    metric = geom.distance
    best_t, best_d = path.t_start, metric(x, path.start)
    for i in range(len(path.vertices) - 1):
        lo, hi = float(path.times[i]), float(path.times[i + 1])
        res = optimize.minimize_scalar(
            lambda t: metric(x, path.point_at(t)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-11},
        )
        cand_t, cand_d = float(res.x), float(res.fun)
        # prefer exact endpoint when the interior result is not better
        for t_end, d_end in ((lo, metric(x, path.point_at(lo))),
                             (hi, metric(x, path.point_at(hi)))):
            if d_end < cand_d - 1e-15:
                cand_t, cand_d = t_end, d_end
        if cand_d < best_d - 1e-12 or (abs(cand_d - best_d) <= 1e-12 and cand_t < best_t):
            best_t, best_d = cand_t, cand_d
    return best_t, path.point_at(best_t), best_d


# ---------------------------------------------------------------------------
# surgeries
# ---------------------------------------------------------------------------


def nearest_point_surgery(
    x: ChartPoint, beta: PolyPath, constants: QGConstants
) -> tuple[PolyPath, QGConstants]:
    """Join x to a (q,Q) path at a nearest point; contract (3q, Q)."""
    t_star, y, d = nearest_point_on_path(x, beta)
    contract = QGConstants(3.0 * constants.q, constants.Q)
    tail = beta.subpath(t_star, beta.t_end)
    if d <= ENDPOINT_TOL:
        return PolyPath(beta.geom, tail.vertices, start_time=0.0), contract
    leg = bridge(beta.geom, x, y)
    return concat(leg, tail.shifted(leg.t_end - tail.t_start)), contract


def ray_to_geodesic_surgery(
    beta: PolyPath, gamma: PolyPath, r: float, constants: QGConstants
) -> tuple[PolyPath, QGConstants]:
    """Redirect a (q,Q) ray ``gamma`` onto a geodesic ray ``beta`` near radius r.

    Requires d(beta(r), gamma) <= r/2; the surgered path follows gamma to its
    nearest point to beta(r), bridges, and continues along beta.  Contract
    (9q, Q); the initial segment gamma|_{r/2} is untouched.
    """
    if r <= 0:
        raise ValueError("surgery radius must be positive")
    if beta.t_end < r:
        raise QRLabError("surgery-precondition", "geodesic ray shorter than radius r")
    br = beta.point_at(beta.t_start + r)
    t_star, y, d = nearest_point_on_path(br, gamma)
    if d > r / 2 + 1e-9:
        raise QRLabError(
            "surgery-precondition",
            f"d(beta(r), gamma) = {d:.6g} exceeds r/2 = {r / 2:.6g}",
        )
    prefix = gamma.subpath(gamma.t_start, t_star)
    out = prefix
    if d > ENDPOINT_TOL:
        out = concat(out, bridge(gamma.geom, y, br))
    beta_tail = beta.subpath(beta.t_start + r, beta.t_end)
    out = concat(out, beta_tail.shifted(out.t_end - beta_tail.t_start))
    return out, QGConstants(9.0 * constants.q, constants.Q)


def segment_to_ray_surgery(
    alpha: PolyPath,
    beta: PolyPath,
    constants: QGConstants,
    coarse: int = 64,
) -> tuple[PolyPath, QGConstants]:
    """Join a (q,Q) ray to a (q,Q) segment across their set distance.

    The realizing pair (x, y) with d(x, y) = d(alpha, beta) is found by a
    coarse grid over both parameters followed by alternating exact segment
    minimizations.  The output follows alpha up to x, bridges to y, then
    follows beta to its terminal end.  Contract (4q, 3Q).
    """
    geom = alpha.geom
    metric = geom.distance
    ta = np.unique(np.concatenate([alpha.times,
                                   np.linspace(alpha.t_start, alpha.t_end, coarse)]))
    tb = np.unique(np.concatenate([beta.times,
                                   np.linspace(beta.t_start, beta.t_end, coarse)]))
    pa = alpha.points_at(ta)
    pb = beta.points_at(tb)
    ii, jj = np.meshgrid(np.arange(len(ta)), np.arange(len(tb)), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    d = pair_distances(metric, [pa[i] for i in ii], [pb[j] for j in jj])
    k = int(np.argmin(d))
    s, t = float(ta[ii[k]]), float(tb[jj[k]])
    for _ in range(12):  # alternating convex line searches
        s = float(
            optimize.minimize_scalar(
                lambda u: metric(alpha.point_at(u), beta.point_at(t)),
                bounds=(alpha.t_start, alpha.t_end), method="bounded",
                options={"xatol": 1e-11},
            ).x
        )
        t = float(
            optimize.minimize_scalar(
                lambda u: metric(alpha.point_at(s), beta.point_at(u)),
                bounds=(beta.t_start, beta.t_end), method="bounded",
                options={"xatol": 1e-11},
            ).x
        )
    x, y = alpha.point_at(s), beta.point_at(t)
    out = alpha.subpath(alpha.t_start, s)
    if metric(x, y) > ENDPOINT_TOL:
        out = concat(out, bridge(geom, x, y))
    tail = beta.subpath(t, beta.t_end)
    if tail.length > 0:
        out = concat(out, tail.shifted(out.t_end - tail.t_start))
    return out, QGConstants(4.0 * constants.q, 3.0 * constants.Q)


def fellow_travel_surgery(
    alpha: PolyPath,
    beta: PolyPath,
    t0: float,
    constants: QGConstants,
    check_step: Optional[float] = None,
) -> tuple[PolyPath, QGConstants]:
    """Switch from alpha to beta at time t0 when they 1-fellow-travel up to t0.

    Verifies d(alpha(t), beta(t)) <= 1 on [start, t0] over a sample grid,
    then outputs alpha|_{<= t0} joined to beta|_{>= t0}.  Contract (q, Q+1).
    """
    if t0 < alpha.t_start or t0 > min(alpha.t_end, beta.t_end):
        raise ValueError("switch time must lie in both parameter ranges")
    step = check_step if check_step is not None else max((t0 - alpha.t_start) / 64.0, 1e-6)
    ts = np.unique(np.concatenate([
        alpha.times[alpha.times <= t0], beta.times[beta.times <= t0],
        np.arange(alpha.t_start, t0, step), [t0],
    ]))
    ts = ts[ts >= max(alpha.t_start, beta.t_start) - 1e-12]
    gap = pair_distances(alpha.geom.distance, alpha.points_at(ts), beta.points_at(ts))
    if np.any(gap > 1.0 + 1e-9):
        raise QRLabError(
            "surgery-precondition",
            f"fellow-travel gap {gap.max():.6g} exceeds 1 before t0",
        )
    out = alpha.subpath(alpha.t_start, t0)
    a_t0, b_t0 = alpha.point_at(t0), beta.point_at(t0)
    if alpha.geom.distance(a_t0, b_t0) > ENDPOINT_TOL:
        out = concat(out, bridge(alpha.geom, a_t0, b_t0))
    tail = beta.subpath(t0, beta.t_end)
    if tail.length > 0:
        out = concat(out, tail.shifted(out.t_end - tail.t_start))
    return out, QGConstants(constants.q, constants.Q + 1.0)


_SURGERY_KINDS = {
    "nearest_point": nearest_point_surgery,
    "ray_to_geodesic": ray_to_geodesic_surgery,
    "segment_to_ray": segment_to_ray_surgery,
    "fellow_travel": fellow_travel_surgery,
}


def surgery(kind: str, **inputs) -> tuple[PolyPath, QGConstants]:
    """Dispatch one of the four surgery operations by name."""
    try:
        fn = _SURGERY_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown surgery kind {kind!r}; "
                         f"expected one of {sorted(_SURGERY_KINDS)}") from None
    return fn(**inputs)


# ---------------------------------------------------------------------------
# transitivity of redirecting
# ---------------------------------------------------------------------------


def transitivity_compose(
    w1: RedirectWitness,
    family2: Callable[[float], Optional[RedirectWitness]],
) -> RedirectWitness:
    """Compose a witness alpha->beta with a witness family beta->gamma.

    ``w1`` lands on the middle ray at ``w1.target_time`` (middle-ray clock);
    the family is asked for a witness at radius just past the landing point,
    so the composed path can follow ``w1`` to its landing and then the
    second witness onward.  Contract (max(q1, q2+1), max(Q1, Q2)).
    """
    geom = w1.path.geom
    landing = w1.path.point_at(w1.landing_time)
    base = w1.path.start
    r2 = geom.distance(base, landing) + 1.0
    w2 = family2(r2)
    if w2 is None:
        raise QRLabError("family-exhausted",
                         f"no witness for the middle ray at radius {r2:.6g}")
    if w2.prefix_time + 1e-9 < w1.target_time:
        raise QRLabError(
            "family-exhausted",
            "second witness modifies the middle ray before the landing point "
            f"(prefix {w2.prefix_time:.6g} < landing {w1.target_time:.6g})",
        )
    head = w1.path.subpath(w1.path.t_start, w1.landing_time)
    mid_tail = w2.path.subpath(w1.target_time, w2.path.t_end)
    composed = concat(head, mid_tail.shifted(head.t_end - mid_tail.t_start))
    shift = w1.landing_time - w1.target_time
    q3 = max(w1.constants.q, w2.constants.q + 1.0)
    Q3 = max(w1.constants.Q, w2.constants.Q)
    return RedirectWitness(
        radius=w1.radius,
        path=composed,
        constants=QGConstants(q3, Q3),
        landing_time=w2.landing_time + shift,
        target_time=w2.target_time,
        prefix_time=w1.prefix_time,
        strategy="transitivity",
        meta={"middle_radius": r2, "first": w1.strategy, "second": w2.strategy},
    )
