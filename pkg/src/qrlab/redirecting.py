"""Finite-radius redirecting laboratory.

A *ray model* is a finite polyline prefix from the basepoint together with a
symbolic tail: either ``flat`` (the ray eventually runs straight inside one
wall) or ``crossing`` (the ray keeps crossing walls, with declared first-hit
times).  On top of ray models the module builds

* concrete redirecting witnesses at a radius, by three strategies
  (``backward_spiral``, ``product_jump``, ``shortest_path_surgery``),
* preorder estimates over a budget grid of constants and a list of radii,
* non-redirectability certificates: a cascade of forced arrival times that
  outruns any sub-exponential crossing budget beyond a threshold radius,
* excursion classification, type/itinerary bookkeeping, limit-ray
  constructions, and poset assembly with Hasse-diagram data.

Witness search is family based and its verdicts say so: ``no-witness-found``
is evidence, not impossibility.  Only certificates assert impossibility, and
only for the tested constants.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import QRLabError
from .geometry import ChartPoint
from .paths import (
    PolyPath,
    QGConstants,
    RedirectWitness,
    bridge,
    pair_distances,
    qg_fit,
)
from .spirals import SpiralParams, backward_spiral, forward_spiral_II
from .templates import Template, build_template

__all__ = [
    "ExcursionProfile",
    "FlatTail",
    "CrossingTail",
    "RayModel",
    "main_flat_ray",
    "flat_ray",
    "crossing_ray",
    "redirect_at_radius",
    "product_jump_segment",
    "PRODUCT_JUMP_CONTRACT",
    "Budget",
    "RadiusRow",
    "PreorderReport",
    "preorder_estimate",
    "CascadeRow",
    "NonRedirectCertificate",
    "nonredirect_certificate",
    "ExcursionReport",
    "excursion_classify",
    "TypeReport",
    "type_and_itinerary",
    "LimitRayReport",
    "limit_ray",
    "PosetReport",
    "poset_build",
    "STRATEGIES",
]

STRATEGIES = ("backward_spiral", "product_jump", "shortest_path_surgery")

#: additive constant used when fitting witness constants
FIT_Q = 1.0

#: damping scale for the time profile of constructed jump spirals
JUMP_RHO0 = 0.05

#: contract for the in-product jump construction (see product_jump_segment)
PRODUCT_JUMP_CONTRACT = QGConstants(q=8.0, Q=4.0)

#: intercept above which a fitted excursion rate counts as exponential
EXCURSION_RATE_THRESHOLD = 0.25


# ---------------------------------------------------------------------------
# profiles and ray models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExcursionProfile:
    """First-hit times ``t_1 < t_2 < ...`` of the successive walls.

    ``times[i]`` is the first time the modeled ray touches wall ``i + 1``;
    the horizon is the number of recorded crossings.
    """

    times: tuple

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 1:
            raise ValueError("a profile needs at least one crossing time")
        if times[0] <= 0:
            raise ValueError("the first crossing time must be positive")
        arr = np.asarray(times)
        if np.any(~np.isfinite(arr)) or np.any(np.diff(arr) <= 0):
            raise QRLabError("bad-profile", "crossing times must be finite and strictly increasing")

    @property
    def horizon(self) -> int:
        return len(self.times)

    def gaps(self) -> np.ndarray:
        """Consecutive differences, with t_0 = 0."""
        return np.diff(np.concatenate(([0.0], np.asarray(self.times))))

    @classmethod
    def from_function(cls, fn, horizon: int) -> "ExcursionProfile":
        return cls(tuple(float(fn(i)) for i in range(1, horizon + 1)))


@dataclass(frozen=True)
class FlatTail:
    """Tail running straight inside one wall, from the prefix end onward."""

    wall: int
    direction: tuple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = float(np.hypot(*d))
        if not n > 0:
            raise ValueError("flat tail needs a nonzero direction")
        object.__setattr__(self, "direction", (float(d[0] / n), float(d[1] / n)))
        if self.wall < 0:
            raise ValueError("wall index must be nonnegative")


@dataclass(frozen=True)
class CrossingTail:
    """Tail that keeps crossing walls following an excursion profile."""

    profile: ExcursionProfile


@dataclass
class RayModel:
    """A quasi-geodesic ray: finite prefix plus symbolic tail.

    The prefix starts at the basepoint (in wall 0) and must be consistent
    with the tail: a flat tail continues straight from the prefix end inside
    its wall's chart, a crossing tail means the prefix realizes the profile's
    first hits (their vertex indices are kept in ``meta['entry_indices']``).
    ``itinerary`` labels the branch of walls the ray travels; rays on
    different branches share only the ambient wall 0.
    """

    name: str
    template: Template
    prefix: PolyPath
    tail: Union[FlatTail, CrossingTail]
    itinerary: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        start = self.prefix.start
        if start.chart != 0:
            raise ValueError("ray models are based in wall 0")
        if self.is_flat:
            end = self.prefix.end
            if end.chart != self.template.wall_chart(self.tail.wall):
                raise ValueError("flat tail must continue from the prefix end's wall chart")

    # -- structure -----------------------------------------------------------------

    @property
    def is_flat(self) -> bool:
        return isinstance(self.tail, FlatTail)

    @property
    def is_crossing(self) -> bool:
        return isinstance(self.tail, CrossingTail)

    @property
    def profile(self) -> Optional[ExcursionProfile]:
        return self.tail.profile if self.is_crossing else None

    @property
    def base(self) -> ChartPoint:
        return self.prefix.start

    def is_main_flat(self) -> bool:
        """Whether the tail runs up the main vertical ray of wall 0."""
        return (
            self.is_flat
            and self.tail.wall == 0
            and abs(self.tail.direction[0]) < 1e-12
            and self.tail.direction[1] > 0
            and float(np.hypot(*self.base.xy)) < 1e-12
        )

    # -- geometry ------------------------------------------------------------------

    def tail_point(self, s: float) -> ChartPoint:
        """Point at arclength ``s`` along the flat tail, from the prefix end."""
        if not self.is_flat:
            raise ValueError("tail_point is only defined for flat tails")
        end = self.prefix.end
        d = np.asarray(self.tail.direction)
        return ChartPoint(end.chart, end.xy + s * d)

    def vertex_norms(self) -> np.ndarray:
        """Distances from the basepoint to the prefix vertices (cached)."""
        norms = self.meta.get("vertex_norms")
        if norms is None:
            verts = self.prefix.vertices
            norms = pair_distances(self.template.distance, [self.base] * len(verts), verts)
            self.meta["vertex_norms"] = norms
        return norms

    def anchored_prefix(self, r: float):
        """Vertices of the ray out to the first one at distance >= r.

        Returns ``(vertices, t_anchor)``.  Flat tails are extended as needed;
        a crossing ray whose modeled horizon never leaves the ball raises
        ``ValueError`` (the model simply does not reach that far).
        """
        if r <= 0:
            raise ValueError("radius must be positive")
        norms = self.vertex_norms()
        hit = np.nonzero(norms >= r)[0]
        if len(hit):
            i = int(hit[0])
            return list(self.prefix.vertices[: i + 1]), float(self.prefix.times[i])
        if not self.is_flat:
            raise ValueError(
                f"radius {r} exceeds the modeled prefix (max norm {norms.max():.6g})"
            )
        metric = self.template.distance
        base = self.base
        f = lambda s: metric(base, self.tail_point(s)) - r
        hi = r + float(norms[-1]) + 1.0
        s_star = optimize.brentq(f, 0.0, hi, xtol=1e-9)
        anchor = self.tail_point(s_star * (1.0 + 1e-12) + 1e-12)
        verts = list(self.prefix.vertices) + [anchor]
        return verts, float(self.prefix.t_end + s_star)

    def entry_vertex(self, i: int):
        """Prefix vertex index of the first hit of wall ``i`` (crossing rays)."""
        idx = self.meta.get("entry_indices")
        if idx is None or i < 1 or i > len(idx):
            return None
        return idx[i - 1]

    def fitted(self, Q: float = FIT_Q, sample_step: Optional[float] = None) -> QGConstants:
        """Fitted constants of the prefix (cached per additive constant)."""
        cache = self.meta.setdefault("fitted", {})
        if Q not in cache:
            step = sample_step or self.prefix.length / 64.0
            cache[Q] = qg_fit(self.prefix, Q, self.template.distance, step)
        return cache[Q]

    def __repr__(self):
        kind = "flat" if self.is_flat else "crossing"
        return f"RayModel({self.name!r}, {kind}, prefix {len(self.prefix)} vertices)"


def main_flat_ray(t: Template, length: float = 32.0, name: str = "zeta") -> RayModel:
    """The main vertical ray of wall 0 (the common flat ray of every branch)."""
    prefix = PolyPath(t, [t.zeta_point(0.0), t.zeta_point(float(length))])
    return RayModel(name=name, template=t, prefix=prefix, tail=FlatTail(0, (0.0, 1.0)))


def flat_ray(
    t: Template,
    wall: int,
    direction=(0.0, 1.0),
    *,
    via: Optional[Sequence[ChartPoint]] = None,
    reach: float = 8.0,
    name: str = "flat",
) -> RayModel:
    """A ray with a straight tail inside ``wall``.

    For ``wall == 0`` the prefix is the single segment from the basepoint;
    otherwise ``via`` lists prefix vertices from the basepoint into the
    wall's chart (a deterministic staircase default is built if omitted).
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    chart = t.wall_chart(wall)
    if via is not None:
        verts = list(via)
        if verts[-1].chart != chart:
            raise ValueError("the last via vertex must lie in the tail wall's chart")
    else:
        verts = [t.base_point()]
        for i in range(wall):
            verts.append(t.wall_point(i, float(reach), 0.0) if i else t.zeta_point(0.0))
            verts.append(t.wall_point(i + 1, 0.0, t.offsets[i]))
        verts = _dedupe(t, verts)
    end = verts[-1]
    verts = verts + [ChartPoint(chart, end.xy + reach * d)]
    return RayModel(
        name=name,
        template=t,
        prefix=PolyPath(t, verts),
        tail=FlatTail(wall, (float(d[0]), float(d[1]))),
        itinerary=tuple(f"w{i}" for i in range(wall + 1)),
    )


def crossing_ray(
    t: Template,
    profile: ExcursionProfile,
    *,
    itinerary: Optional[tuple] = None,
    name: str = "alpha",
) -> RayModel:
    """Deterministic staircase ray realizing the profile's first-hit times.

    Inside wall ``i`` the ray runs straight from its entry point ``(0, c_i)``
    to the far gluing line at ``(g_i, 0)``, then crosses the strip
    perpendicularly; unit speed makes the first hit of wall ``i+1`` exactly
    ``t_{i+1}``, which forces ``g_i = sqrt(lambda_i^2 - c_i^2)`` with
    ``lambda_i`` the time budget of the step net of the strip width.  A
    budget smaller than the entry height cannot be realized and raises
    ``bad-profile``.
    """
    k = profile.horizon
    if t.n_strips < k:
        raise ValueError(f"template has {t.n_strips} strips, profile needs {k}")
    gaps = profile.gaps()
    verts = [t.base_point()]
    entry_indices = []
    c = 0.0
    for i in range(k):
        lam = gaps[i] - t.widths[i]
        if lam < abs(c) - 1e-12:
            raise QRLabError(
                "bad-profile",
                f"step {i}: time budget {gaps[i]:.6g} is too small to reach the "
                f"next wall from height {c:.6g} across width {t.widths[i]:.6g}",
            )
        g = math.sqrt(max(lam * lam - c * c, 0.0))
        exit_pt = t.wall_point(i, g, 0.0) if i else t.zeta_point(g)
        if not t.same_point(verts[-1], exit_pt):
            verts.append(exit_pt)
        c = float(t.offsets[i] + t.orientations[i] * g)
        verts.append(t.wall_point(i + 1, 0.0, c))
        entry_indices.append(len(verts) - 1)
    ray = RayModel(
        name=name,
        template=t,
        prefix=PolyPath(t, verts),
        tail=CrossingTail(profile),
        itinerary=itinerary or tuple(f"w{i}" for i in range(k + 1)),
    )
    ray.meta["entry_indices"] = entry_indices
    return ray


def _dedupe(t: Template, verts):
    out = [verts[0]]
    for v in verts[1:]:
        if not t.same_point(out[-1], v):
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# witness strategies
# ---------------------------------------------------------------------------


def _fit(path: PolyPath, metric, Q: float = FIT_Q) -> QGConstants:
    return qg_fit(path, Q, metric, path.length / 64.0)


def _same_ray(a: RayModel, b: RayModel) -> bool:
    if a is b:
        return True
    if a.is_main_flat() and b.is_main_flat():
        return True  # the main ray is shared by every branch
    return (
        a.template is b.template
        and a.itinerary == b.itinerary
        and type(a.tail) is type(b.tail)
        and a.tail == b.tail
        and len(a.prefix.vertices) == len(b.prefix.vertices)
        and all(a.template.same_point(x, y) for x, y in zip(a.prefix.vertices, b.prefix.vertices))
    )


def _identity_witness(alpha: RayModel, r: float) -> RedirectWitness:
    verts, t_anchor = alpha.anchored_prefix(r)
    path = PolyPath(alpha.template, verts)
    return RedirectWitness(
        radius=r,
        path=path,
        constants=alpha.fitted(),
        landing_time=t_anchor,
        target_time=t_anchor,
        prefix_time=t_anchor,
        strategy="identity",
    )


def _extended_template(t: Template, keep_strips: int, shear: float) -> Template:
    """Append a far branch: a strip with a large shear, then a plain strip.

    Models the freedom to choose an admissible plane as far away as needed.
    The kept strips pin the geometry the source ray actually uses; the first
    appended strip carries offset ``shear``, so the new wall's origin -- and
    with it the whole region the approach path traverses -- sits that far
    from the basepoint's chain.  Crossing the sheared wall costs about
    ``shear``, which makes the second appended wall a plane at distance
    ``~shear`` from the junction while keeping every approach point far
    from the basepoint.
    """
    keep = int(keep_strips)
    widths = list(t.widths[:keep]) + [1.0, 1.0]
    offsets = list(t.offsets[:keep]) + [float(shear), 0.0]
    orients = list(t.orientations[:keep]) + [1, 1]
    angles = list(t.angles[: max(keep - 1, 0)])
    angles += [math.pi / 2] * (len(widths) - 1 - len(angles))
    return build_template(widths, offsets=offsets, orientations=orients, angles=angles)


def _distance_to_wall(t: Template, x: ChartPoint, m: int):
    """Distance from ``x`` to wall ``m`` and the nearest point on its near line.

    Every path into the wall enters through its near gluing line, so the
    closest point of the whole plane lies on that line; the minimizer sits
    within twice the gap to the wall's origin.
    """
    metric = t.distance
    anchor_gap = metric(x, t.p_point(m))
    B = 2.0 * anchor_gap + 1.0
    f = lambda s: metric(x, t.wall_point(m, 0.0, s))
    res = optimize.minimize_scalar(f, bounds=(-B, B), method="bounded", options={"xatol": 1e-9})
    return float(res.fun), t.wall_point(m, 0.0, float(res.x))


def _spiral_witness(
    alpha: RayModel,
    beta: RayModel,
    r: float,
    *,
    params: Optional[SpiralParams] = None,
    allow_extension: bool = True,
) -> Optional[RedirectWitness]:
    """Anchor on alpha past radius r, dive to a far wall, spiral back to the
    main ray: every stage grows by the factor rho, so the finished chain
    keeps uniform constants no matter the radius."""
    if not beta.is_main_flat():
        raise QRLabError(
            "strategy-unavailable",
            "backward_spiral targets the main flat ray of wall 0",
        )
    if alpha.is_main_flat():
        raise QRLabError(
            "strategy-unavailable",
            "backward_spiral needs a source that leaves wall 0's vertical ray",
        )
    verts, t_anchor = alpha.anchored_prefix(r)
    w = verts[-1]
    t0 = alpha.template
    prefix = PolyPath(t0, verts)
    if params is None:
        # the concatenation bookkeeping only involves the reused prefix,
        # so its own fitted constants seed the stage-growth rate
        q_hat = max(1.0, _fit(prefix, t0.distance).q) + 0.1
        delta = float(min(1.0, np.min(t0.widths))) if t0.n_strips else 1.0
        params = SpiralParams(q=q_hat, Q=FIT_Q, delta=delta, rho=q_hat / delta + FIT_Q + 1.0)
    norms = pair_distances(t0.distance, [alpha.base] * len(verts), verts)
    sup_norm = float(np.max(norms))
    need = params.rho * sup_norm * (1.0 + 1e-9)

    anchor_wall = (w.chart + 1) // 2
    t_amb = t0
    if allow_extension:
        shear = need + float(np.hypot(*w.xy)) + 2.0
        t_amb = _extended_template(t0, anchor_wall, shear)
    target = None
    for m in range(anchor_wall + 1, t_amb.n_strips + 1):
        dist_m, x = _distance_to_wall(t_amb, w, m)
        if dist_m >= need:
            target = (m, dist_m, x)
            break
    if target is None:
        return None
    m, d_wx, x = target

    approach = bridge(t_amb, w, x)
    v_first = max(1.0, 2.0 * params.q * params.Q, params.rho * (1.0 + 1e-6) * d_wx)
    t_spiral = _truncated(t_amb, m)
    spiral = backward_spiral(
        t_spiral, x, params, v_n_length=v_first, terminal_direction="zeta"
    )
    a0 = spiral.meta["landing_zeta_param"]
    term_len = spiral.meta["terminal_length"]
    if a0 + term_len < 1.0:
        # the terminal leg must reach the positive half of the main ray
        spiral = backward_spiral(
            t_spiral,
            x,
            params,
            v_n_length=v_first,
            terminal_direction="zeta",
            terminal_length=term_len + (1.0 - a0),
        )
    path_verts = _dedupe(t_amb, list(verts) + approach.vertices[1:] + spiral.path.vertices[1:])
    path = PolyPath(t_amb, path_verts)
    constants = _fit(path, t_amb.distance, Q=params.Q)

    a0 = spiral.meta["landing_zeta_param"]
    term_len = spiral.meta["terminal_length"]
    t_land = path.t_end - term_len + max(0.0, -a0)
    return RedirectWitness(
        radius=r,
        path=path,
        constants=constants,
        landing_time=float(t_land),
        target_time=float(max(a0, 0.0)),
        prefix_time=float(t_anchor),
        strategy="backward_spiral",
        meta={
            "wall": m,
            "approach_gap": d_wx,
            "sup_norm": sup_norm,
            "params": params,
            "extended": t_amb is not t0,
            "spiral_meta": spiral.meta,
        },
    )


def _truncated(t: Template, last_wall: int) -> Template:
    """The sub-template of walls 0..last_wall (charts keep their indices)."""
    if last_wall >= t.n_strips:
        return t
    m = int(last_wall)
    return build_template(
        t.widths[:m],
        offsets=t.offsets[:m],
        orientations=t.orientations[:m],
        angles=t.angles[: max(m - 1, 0)],
    )


def product_jump_segment(t: Template, x: ChartPoint, y: ChartPoint, z: ChartPoint, w: ChartPoint):
    """The in-product jump: a path from x through y that lands on z or w.

    Requires ``d(z, w) > 8 d(x, y)``; then one of z, w is at distance more
    than ``4 d(x, y)`` from x, and the concatenation of the geodesics
    [x, y] and [y, far point] stays a quasi-geodesic with the module
    contract.  Returns ``(path, fitted constants, landing point)``.
    """
    metric = t.distance
    d_xy = metric(x, y)
    d_zw = metric(z, w)
    if not d_zw > 8.0 * d_xy:
        raise QRLabError(
            "strategy-unavailable",
            f"jump needs d(z, w) > 8 d(x, y); got {d_zw:.6g} vs 8 * {d_xy:.6g}",
        )
    d_xz, d_xw = metric(x, z), metric(x, w)
    far = z if d_xz >= d_xw else w
    verts = _dedupe(t, bridge(t, x, y).vertices + bridge(t, y, far).vertices[1:])
    path = PolyPath(t, verts)
    fitted = _fit(path, metric, Q=PRODUCT_JUMP_CONTRACT.Q)
    return path, fitted, far


def _jump_witness(
    alpha: RayModel,
    beta: RayModel,
    r: float,
    *,
    rho0: float = JUMP_RHO0,
) -> Optional[RedirectWitness]:
    """Ride the main ray to radius r, spiral forward on the target's own time
    profile, and jump across the last product buffer onto the target."""
    if not alpha.is_main_flat():
        raise QRLabError(
            "strategy-unavailable",
            "product_jump starts along the main flat ray of wall 0",
        )
    if not beta.is_crossing:
        raise QRLabError(
            "strategy-unavailable",
            "product_jump lands on a crossing ray (needs its first-hit profile)",
        )
    t = beta.template
    times = np.asarray(beta.profile.times)
    gaps = beta.profile.gaps()
    k = None
    for i in range(2, len(times) + 1):
        if gaps[i - 1] >= r * (1.0 + rho0) ** i:
            k = i
            break
    if k is None:
        return None  # no step of the profile splits at this radius
    spiral = forward_spiral_II(t, r, times[:k], rho0)
    z_last = spiral.path.end
    p_prev = t.p_point(k - 1)
    x_k = beta.prefix.vertices[beta.entry_vertex(k)]
    x_prev = beta.prefix.vertices[beta.entry_vertex(k - 1)]
    metric = t.distance
    s = metric(z_last, p_prev)
    if not metric(x_k, x_prev) > 8.0 * s:
        return None  # the buffer between the marked points is too thin
    # one of the two marked entries is at distance > 4s from z; jump straight
    # to it so the witness keeps the spiral's damped height above the origin
    # chain (detouring through the chain would cost time ~ 2r at distance
    # O(k) from the basepoint and ruin the constants)
    d_k, d_prev = metric(z_last, x_k), metric(z_last, x_prev)
    far = x_k if d_k >= d_prev else x_prev
    far_wall = k if far is x_k else k - 1
    far_idx = beta.entry_vertex(far_wall)
    verts = _dedupe(
        t,
        spiral.path.vertices
        + bridge(t, z_last, far).vertices[1:]
        + list(beta.prefix.vertices[far_idx + 1 :]),
    )
    path = PolyPath(t, verts)
    constants = _fit(path, metric)
    cont_len = beta.prefix.t_end - beta.prefix.times[far_idx]
    t_land = path.t_end - cont_len
    return RedirectWitness(
        radius=r,
        path=path,
        constants=constants,
        landing_time=float(t_land),
        target_time=float(beta.prefix.times[far_idx]),
        prefix_time=float(r),
        strategy="product_jump",
        meta={
            "k": k,
            "rho0": rho0,
            "buffer_gap": float(metric(x_k, x_prev)),
            "jump_base_gap": float(s),
            "landed_wall": far_wall,
        },
    )


def _surgery_witness(alpha: RayModel, beta: RayModel, r: float) -> Optional[RedirectWitness]:
    """Leave alpha past radius r along a geodesic onto a far point of beta."""
    t = _ambient(alpha, beta)
    if t is None:
        raise QRLabError(
            "strategy-unavailable",
            "shortest_path_surgery needs both rays in one ambient branch",
        )
    alpha, beta = _rebased(alpha, t), _rebased(beta, t)
    verts, t_anchor = alpha.anchored_prefix(r)
    x_r = verts[-1]
    metric = t.distance
    nx = float(metric(alpha.base, x_r))
    floor = max(r, nx)
    candidates = []  # (target point, beta time, continuation vertices)
    if beta.is_flat:
        for f in (1.0, 2.0, 4.0):
            s = floor * f + 1.0
            y = beta.tail_point(s)
            cont = 2.0 * (s + floor) + 8.0
            candidates.append((y, beta.prefix.t_end + s, [beta.tail_point(s + cont)]))
    else:
        norms = beta.vertex_norms()
        idxs = [int(i) for i in np.nonzero(norms >= floor)[0]]
        for i in idxs[:3]:
            y = beta.prefix.vertices[i]
            candidates.append(
                (y, float(beta.prefix.times[i]), list(beta.prefix.vertices[i + 1 :]))
            )
    best = None
    for y, t_y, cont in candidates:
        if not cont:
            continue
        path_verts = _dedupe(t, list(verts) + bridge(t, x_r, y).vertices[1:] + cont)
        path = PolyPath(t, path_verts)
        fitted = _fit(path, metric)
        if best is None or fitted.q < best[1].q:
            cont_time = path.t_end - sum(
                t.segment_length(a, b) for a, b in zip([y] + cont[:-1], cont)
            )
            best = (path, fitted, cont_time, t_y)
    if best is None:
        return None
    path, fitted, t_land, t_y = best
    return RedirectWitness(
        radius=r,
        path=path,
        constants=fitted,
        landing_time=float(t_land),
        target_time=float(t_y),
        prefix_time=float(t_anchor),
        strategy="shortest_path_surgery",
    )


def _ambient(a: RayModel, b: RayModel) -> Optional[Template]:
    """The shared template for cross-ray constructions, or None.

    Main flat rays live on wall 0 of every branch and adopt the other ray's
    template; other pairs must share both the template and the branch
    (itinerary) -- rays on different branches share only wall 0.
    """
    if a.is_main_flat():
        return b.template
    if b.is_main_flat():
        return a.template
    if a.template is b.template and a.itinerary == b.itinerary:
        return a.template
    return None


def _rebased(ray: RayModel, t: Template) -> RayModel:
    if ray.template is t:
        return ray
    if not ray.is_main_flat():
        raise QRLabError("strategy-unavailable", "only the main flat ray can change branches")
    return main_flat_ray(t, length=float(ray.prefix.length), name=ray.name)


def redirect_at_radius(
    alpha: RayModel,
    beta: RayModel,
    r: float,
    strategy: str,
    **options,
) -> Optional[RedirectWitness]:
    """Construct a witness redirecting ``alpha`` to ``beta`` at radius ``r``.

    The witness follows alpha out of the ball of radius r, transitions by the
    chosen strategy, and eventually coincides with beta; its fitted constants
    are reported as found.  ``None`` means the strategy's candidate family
    was exhausted -- never a proof of non-redirectability.  A strategy whose
    structural preconditions fail raises ``strategy-unavailable``.
    """
    if not (r > 0 and math.isfinite(r)):
        raise ValueError(f"radius must be positive and finite, got {r}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose one of {STRATEGIES}")
    if _same_ray(alpha, beta):
        return _identity_witness(alpha, r)
    if strategy == "backward_spiral":
        return _spiral_witness(alpha, beta, r, **options)
    if strategy == "product_jump":
        return _jump_witness(alpha, beta, r, **options)
    return _surgery_witness(alpha, beta, r)


def best_witness(
    alpha: RayModel,
    beta: RayModel,
    r: float,
    strategies: Sequence[str] = STRATEGIES,
    budget: Optional["Budget"] = None,
) -> Optional[RedirectWitness]:
    """Best-fitting witness over the applicable strategies (None if all fail).

    Shortest-path surgery is the generic fallback and by far the most
    expensive strategy to fit, so it is only attempted when no targeted
    strategy produced a witness (within ``budget`` when one is given).
    """
    best = None
    for s in strategies:
        if s == "shortest_path_surgery" and best is not None:
            if budget is None or budget.covers(best.constants):
                continue
        try:
            w = redirect_at_radius(alpha, beta, r, s)
        except QRLabError as e:
            if e.code == "strategy-unavailable":
                continue
            raise
        if w is not None and (best is None or w.constants.q < best.constants.q):
            best = w
    return best


# ---------------------------------------------------------------------------
# preorder estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Budget:
    """Grid of constants a witness may use, and the default radii."""

    qs: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    Qs: tuple = (0.0, 1.0, 4.0, 16.0)

    def covers(self, c: QGConstants) -> bool:
        return c.q <= max(self.qs) + 1e-9 and c.Q <= max(self.Qs) + 1e-9

    def cells_covering(self, fits: Sequence[QGConstants]):
        """Grid cells (q, Q) that dominate every fitted pair, smallest first."""
        out = []
        for q in self.qs:
            for Q in self.Qs:
                if all(c.q <= q + 1e-9 and c.Q <= Q + 1e-9 for c in fits):
                    out.append((q, Q))
        return sorted(out)


DEFAULT_RADII = (10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class RadiusRow:
    """Outcome of the witness search at one radius."""

    radius: float
    strategy: Optional[str]
    constants: Optional[QGConstants]
    landed: bool

    @property
    def q(self):
        return None if self.constants is None else self.constants.q

    @property
    def Q(self):
        return None if self.constants is None else self.constants.Q


@dataclass
class PreorderReport:
    """Evidence table for alpha -> beta over the tested radii."""

    alpha: str
    beta: str
    verdict: str
    rows: list
    cell: Optional[tuple]
    budget: Budget

    @property
    def witnessed(self) -> bool:
        return self.verdict == "witnessed-with-uniform-constants"


def preorder_estimate(
    alpha: RayModel,
    beta: RayModel,
    radii: Sequence[float] = DEFAULT_RADII,
    budget: Optional[Budget] = None,
    strategies: Sequence[str] = STRATEGIES,
    keep_witnesses: bool = False,
) -> PreorderReport:
    """Estimate whether alpha can be redirected to beta within a budget.

    A row counts as landed only when its best witness fits within the
    budget: ``witnessed-with-uniform-constants`` iff every radius lands and
    one budget cell dominates all the fits; ``witnessed-nonuniform`` iff
    every radius lands but no single cell covers them (possible only for
    non-nested budgets); ``no-witness-found`` otherwise -- an out-of-budget
    fit is recorded in its row but does not count as a witness.  Witnesses
    anchored at any unbounded vertex sequence of alpha are accepted (each
    covers its radius).
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    budget = budget or Budget()
    rows = []
    fits = []
    witnesses = []
    for r in radii:
        w = best_witness(alpha, beta, r, strategies, budget=budget)
        if w is not None and budget.covers(w.constants):
            rows.append(RadiusRow(r, w.strategy, w.constants, True))
            fits.append(w.constants)
            witnesses.append(w)
        elif w is not None:
            rows.append(RadiusRow(r, w.strategy, w.constants, False))
            witnesses.append(w)
        else:
            rows.append(RadiusRow(r, None, None, False))
            witnesses.append(None)
    if all(row.landed for row in rows):
        cells = budget.cells_covering(fits)
        if cells:
            verdict, cell = "witnessed-with-uniform-constants", cells[0]
        else:
            verdict, cell = "witnessed-nonuniform", None
    else:
        verdict, cell = "no-witness-found", None
    report = PreorderReport(
        alpha=alpha.name, beta=beta.name, verdict=verdict, rows=rows, cell=cell, budget=budget
    )
    if keep_witnesses:
        report.witnesses = witnesses
    return report


# ---------------------------------------------------------------------------
# non-redirectability certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CascadeRow:
    """One induction step of the forced-arrival cascade at a fixed radius."""

    k: int
    t_lower: float
    ell_lower: float
    crossing_budget: float
    actual_time: Optional[float]


@dataclass
class NonRedirectCertificate:
    """Arithmetic certificate that no (q, Q)-witness survives beyond r_star.

    Any witness that follows the main ray to radius r and eventually
    coincides with the profiled ray is forced to reach wall k no earlier
    than ``r (1 + rho1)^k`` while keeping a transverse reserve
    ``ell_k >= (r rho0 / 2)(1 + rho1)^(k+1)``; both follow by induction from
    the two travel inequalities of a (q, Q) parametrization.  The profiled
    ray's own crossing budget grows like ``(C / rho)(1 + rho)^k``, which is
    eventually smaller, so the witness arrives after the target has left.
    """

    q: float
    Q: float
    rho0: float
    rho1: float
    rho: float
    C: float
    r_star: float
    profile: ExcursionProfile
    deltas: np.ndarray
    rows: dict
    divergence: dict

    def check_soundness(self, rtol: float = 1e-12) -> bool:
        """Re-derive every cascade row from its predecessor.

        Verifies the stored closed forms satisfy the two recursions
        ``t_{k+1} >= t_k + rho0 * ell_k`` and
        ``ell_{k+1} >= rho0 * t_{k+1} - budget_k`` with margin, and that the
        base row starts at the radius itself.
        """
        for r, rows in self.rows.items():
            if not math.isclose(rows[0].t_lower, r, rel_tol=rtol):
                return False
            for prev, cur in zip(rows, rows[1:]):
                forced_t = prev.t_lower + self.rho0 * prev.ell_lower
                if cur.t_lower > forced_t * (1.0 + rtol):
                    return False
                forced_ell = self.rho0 * cur.t_lower - prev.crossing_budget
                if cur.ell_lower > max(forced_ell, 0.0) * (1.0 + rtol) + rtol:
                    return False
        return True


def default_rho0(q: float, Q: float) -> float:
    """Travel-reserve rate of a (q, Q) parametrization used by certificates.

    Exposed as a tunable: the theory only guarantees existence of a positive
    rate depending on (q, Q).
    """
    return 1.0 / (4.0 * q * (Q + 1.0))


def nonredirect_certificate(
    profile: ExcursionProfile,
    deltas,
    q: float,
    Q: float,
    *,
    rho0: Optional[float] = None,
    radii: Optional[Sequence[float]] = None,
) -> NonRedirectCertificate:
    """Certificate that (q, Q)-witnesses onto the profiled ray fail beyond r*.

    ``deltas`` are the gaps of the distinguished-point chain (a Template may
    be passed; its strip diagonals are used).  The profile must classify as
    sub-exponential at its horizon, else ``profile-inconsistent``.
    """
    if isinstance(deltas, Template):
        deltas = deltas.w
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or len(deltas) < 1:
        raise ValueError("deltas must be a nonempty vector of chain gaps")
    report = excursion_classify(profile)
    if report.verdict != "subexponential-consistent":
        raise QRLabError(
            "profile-inconsistent",
            f"excursion classifies as {report.verdict} (fitted rate {report.fitted_limit:.4g})",
        )
    if not (q >= 1.0 and Q >= 0.0):
        raise ValueError("need q >= 1 and Q >= 0")
    rho0 = default_rho0(q, Q) if rho0 is None else float(rho0)
    if not (0.0 < rho0 < 1.0):
        raise ValueError("rho0 must lie in (0, 1)")
    rho1 = rho0 * rho0 / 2.0
    rho = rho1 / 2.0
    idx = np.arange(len(deltas))
    C = float(np.max(deltas / (1.0 + rho) ** idx))
    r_star = 2.0 * C / (rho * rho0)
    if radii is None:
        radii = (2.0 * r_star, 4.0 * r_star)
    K = profile.horizon
    rows = {}
    divergence = {}
    for r in (float(x) for x in radii):
        if r <= r_star:
            raise ValueError(f"certificate radius {r} must exceed r_star = {r_star:.6g}")
        table = []
        div = None
        for k in range(K + 1):
            t_lb = r * (1.0 + rho1) ** k
            ell_lb = (r * rho0 / 2.0) * (1.0 + rho1) ** (k + 1)
            budget = (C / rho) * (1.0 + rho) ** k
            actual = profile.times[k - 1] if k >= 1 else 0.0
            table.append(CascadeRow(k, t_lb, ell_lb, budget, actual))
            if div is None and k >= 1 and t_lb > 2.0 * actual:
                div = k
        rows[r] = table
        if div is None:
            raise ValueError(
                f"profile horizon {K} too short to exhibit divergence at radius {r}"
            )
        divergence[r] = div
    return NonRedirectCertificate(
        q=q,
        Q=Q,
        rho0=rho0,
        rho1=rho1,
        rho=rho,
        C=C,
        r_star=r_star,
        profile=profile,
        deltas=deltas,
        rows=rows,
        divergence=divergence,
    )


# ---------------------------------------------------------------------------
# excursion classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExcursionReport:
    verdict: str
    fitted_limit: float
    intercept: float
    slope: float
    s_values: tuple


def excursion_classify(profile: ExcursionProfile, horizon: Optional[int] = None) -> ExcursionReport:
    """Classify the growth of the crossing-time gaps at the horizon.

    Computes ``s_i = log(t_i - t_{i-1}) / i`` and extrapolates the tail by a
    least-squares line in ``1/i``; the intercept estimates the limiting rate.
    A rate above ``EXCURSION_RATE_THRESHOLD`` counts as exponential.
    """
    K = profile.horizon if horizon is None else min(int(horizon), profile.horizon)
    if K < 4:
        raise ValueError("classification needs a horizon of at least 4 crossings")
    gaps = profile.gaps()[:K]
    if np.any(gaps <= 0):
        raise QRLabError("bad-profile", "crossing times must be strictly increasing")
    i = np.arange(1, K + 1, dtype=float)
    s = np.log(gaps) / i
    tail = i >= max(2, K // 2)
    slope, intercept = np.polyfit(1.0 / i[tail], s[tail], 1)
    rate = max(float(intercept), 0.0)
    verdict = (
        "exponential-detected" if rate > EXCURSION_RATE_THRESHOLD else "subexponential-consistent"
    )
    return ExcursionReport(
        verdict=verdict,
        fitted_limit=rate,
        intercept=float(intercept),
        slope=float(slope),
        s_values=tuple(float(x) for x in s),
    )


# ---------------------------------------------------------------------------
# type and itinerary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeReport:
    kind: str
    u_times: tuple
    itinerary: Optional[tuple]


def type_and_itinerary(ray: RayModel) -> TypeReport:
    """Wall-stint bookkeeping: the supremum time of each stay in a wall.

    Walks the prefix vertices, recording one ``u`` value per maximal run of
    vertices inside a single wall chart (strip vertices belong to the
    transition).  A flat tail makes the last stint's supremum infinite --
    the ray stays in finitely many walls (type I); a crossing tail has every
    stint finite and the itinerary is the ordered wall chain (type II).
    """
    t = ray.template
    stints = []  # (wall, last_time)
    for v, tv in zip(ray.prefix.vertices, ray.prefix.times):
        if not t.is_wall_chart(v.chart):
            continue
        wall = v.chart // 2
        if stints and stints[-1][0] == wall:
            stints[-1][1] = float(tv)
        else:
            stints.append([wall, float(tv)])
    if ray.is_flat:
        if stints and stints[-1][0] == ray.tail.wall:
            stints[-1][1] = math.inf
        else:
            stints.append([ray.tail.wall, math.inf])
        return TypeReport(kind="I", u_times=tuple(u for _, u in stints), itinerary=None)
    walls = [wall for wall, _ in stints]
    if any(b <= a for a, b in zip(walls, walls[1:])):
        # a crossing tail with non-monotone stints would contradict the
        # declared profile; report the honest chain up to the last advance
        walls = sorted(set(walls))
    itinerary = ray.itinerary or tuple(f"w{w}" for w in walls)
    return TypeReport(kind="II", u_times=tuple(u for _, u in stints), itinerary=itinerary)


# ---------------------------------------------------------------------------
# limit rays
# ---------------------------------------------------------------------------


@dataclass
class LimitRayReport:
    """Straightened approximants [base, x_i] + tail and their behavior."""

    paths: list
    anchors: list
    constants: list
    contract: QGConstants
    checkpoint_gaps: list


def limit_ray(alpha: RayModel, radii: Sequence[float]) -> LimitRayReport:
    """Replace the prefix inside radius r_i by the geodesic to its exit point.

    Each approximant is geodesic out to ``x_i`` (the start of the ray beyond
    radius ``r_i``) and then follows the ray; the family's fitted constants
    stay within triple the source's multiplicative constant, and the initial
    geodesics converge vertexwise on compact radii (reported as successive
    checkpoint gaps).
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    t = alpha.template
    metric = t.distance
    fitted = alpha.fitted()
    paths, anchors, consts = [], [], []
    norms = alpha.vertex_norms()
    for r in radii:
        hit = np.nonzero(norms >= r)[0]
        if len(hit):
            idx = int(hit[0])
            x_i = alpha.prefix.vertices[idx]
            past = list(alpha.prefix.vertices[idx + 1 :])
        else:
            verts, _ = alpha.anchored_prefix(r)
            x_i = verts[-1]
            past = []
        if alpha.is_flat:
            dvec = np.asarray(alpha.tail.direction)
            tip = past[-1] if past else x_i
            past = past + [ChartPoint(tip.chart, tip.xy + (2.0 * max(radii) + 8.0) * dvec)]
        straightened = _dedupe(t, bridge(t, alpha.base, x_i).vertices + past)
        path = PolyPath(t, straightened)
        paths.append(path)
        anchors.append(x_i)
        consts.append(_fit(path, metric))
    checkpoints = np.linspace(0.5, min(radii) * 0.9, 8)
    gaps = []
    for a, b in zip(paths, paths[1:]):
        pa = [a.point_at(float(s)) for s in checkpoints]
        pb = [b.point_at(float(s)) for s in checkpoints]
        gaps.append(float(np.max(pair_distances(metric, pa, pb))))
    contract = QGConstants(q=3.0 * fitted.q, Q=fitted.Q)
    return LimitRayReport(
        paths=paths, anchors=anchors, constants=consts, contract=contract, checkpoint_gaps=gaps
    )


# ---------------------------------------------------------------------------
# poset assembly
# ---------------------------------------------------------------------------


@dataclass
class PosetReport:
    """Pairwise preorder evidence and the induced order structure."""

    names: list
    reports: dict  # (alpha, beta) -> PreorderReport
    classes: list  # list of frozensets of names, mutual witnesses
    hasse_edges: list  # (lower class index, upper class index)
    largest: Optional[int]
    antichains: list  # pairs of names with no witness either way

    def relation(self, a: str, b: str) -> bool:
        return a == b or self.reports[(a, b)].witnessed


def poset_build(
    rays: Sequence[RayModel],
    radii: Sequence[float] = DEFAULT_RADII,
    budget: Optional[Budget] = None,
    workers: int = 1,
) -> PosetReport:
    """Evaluate every ordered pair and assemble the evidence poset.

    Mutually witnessed rays merge into one class; the class digraph is
    transitively reduced into Hasse edges; the largest element (a class that
    every other class redirects into) and the no-witness antichains are
    reported.  Pairwise evaluations are independent and may run in a thread
    pool; assembly is single-threaded and deterministic.
    """
    import networkx as nx

    names = [r.name for r in rays]
    if len(set(names)) != len(names):
        raise ValueError("ray names must be distinct")
    budget = budget or Budget()
    pairs = [(a, b) for a in rays for b in rays if a is not b]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda ab: preorder_estimate(ab[0], ab[1], radii, budget), pairs)
            )
    else:
        results = [preorder_estimate(a, b, radii, budget) for a, b in pairs]
    reports = {(a.name, b.name): rep for (a, b), rep in zip(pairs, results)}

    g = nx.DiGraph()
    g.add_nodes_from(names)
    for (a, b), rep in reports.items():
        if rep.witnessed:
            g.add_edge(a, b)
    classes = [frozenset(c) for c in nx.strongly_connected_components(g)]
    classes.sort(key=lambda c: sorted(c)[0])
    cls_of = {n: i for i, c in enumerate(classes) for n in c}
    dag = nx.DiGraph()
    dag.add_nodes_from(range(len(classes)))
    for a, b in g.edges:
        ia, ib = cls_of[a], cls_of[b]
        if ia != ib:
            dag.add_edge(ia, ib)
    reduced = nx.transitive_reduction(dag) if nx.is_directed_acyclic_graph(dag) else dag
    hasse = sorted(reduced.edges)
    closure = nx.transitive_closure(dag, reflexive=True)
    largest = None
    for i in range(len(classes)):
        if all(closure.has_edge(j, i) for j in range(len(classes))):
            largest = i
            break
    antichains = sorted(
        tuple(sorted((a, b)))
        for a in names
        for b in names
        if a < b and not reports[(a, b)].witnessed and not reports[(b, a)].witnessed
    )
    return PosetReport(
        names=names,
        reports=reports,
        classes=classes,
        hasse_edges=hasse,
        largest=largest,
        antichains=sorted(set(antichains)),
    )
