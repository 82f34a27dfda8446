"""Spiral path constructions in templates and the concatenation criterion.

Two families of distinguished quasi-geodesics are built here:

* **Backward spirals** start at a point in the last wall and work their way
  back to wall 0.  Each stage is a Z-piece ``v_i . h_i . eta_{i-1}``: a
  vertical leg in the wall, a horizontal leg to the wall's near singular
  line, and a perpendicular strip crossing.  The vertical legs grow
  geometrically (factor ``rho``) which is what makes the whole concatenation
  a quasi-geodesic with constants depending only on the seed parameters.

* **Forward spirals** start along the main vertical ray ``zeta`` in wall 0
  and hop outward wall-by-wall through marked points ``z_i`` (on the far
  singular line of wall ``i``, at controlled distance ``kappa_i`` from the
  wall origin) and their strip projections ``y_i``.  Type I uses
  ``kappa_i = r (1 + rho0)^i``; Type II uses the damped profile
  ``kappa_i = r rho0 (1 + rho0)^i`` driven by an explicit time sequence.

`verify_concat_conditions` checks the five hypotheses of the concatenation
criterion for an arbitrary endpoint-chained family of paths, and
`constructqg_constants` evaluates the closed-form quasi-geodesic constants
``(L, C)`` that the criterion guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import QRLabError
from .geometry import ChartPoint
from .paths import ENDPOINT_TOL, PolyPath, QGConstants, pair_distances, qg_fit
from .templates import Template, p_chain_stats

__all__ = [
    "SpiralParams",
    "SegmentRole",
    "SpiralPath",
    "ConditionCheck",
    "ConcatReport",
    "GrowthReport",
    "backward_spiral",
    "verify_concat_conditions",
    "constructqg_constants",
    "forward_spiral_I",
    "forward_spiral_II",
    "forward_ratio_bound",
    "growth_check",
]

#: Strictness factor applied to the stage growth inequality so that the
#: constructed paths satisfy it strictly even after floating-point rounding.
STAGE_SLACK = 1e-6


@dataclass(frozen=True)
class SpiralParams:
    """Seed constants shared by the spiral constructions.

    Not every field is meaningful for every construction: backward spirals
    read ``(q, Q, delta, rho)``, forward spirals read ``(rho0, r, C)``.
    Validation of the construction-specific inequalities happens at the
    construction site so a single parameter object can be threaded through
    an experiment.
    """

    q: float = 1.0
    Q: float = 0.0
    delta: float = 1.0
    rho: Optional[float] = None
    rho0: Optional[float] = None
    r: Optional[float] = None
    C: Optional[float] = None

    def __post_init__(self) -> None:
        if not (self.q >= 1.0):
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not (self.Q >= 0.0):
            raise ValueError(f"Q must be >= 0, got {self.Q}")
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        for name in ("rho", "rho0", "r", "C"):
            value = getattr(self, name)
            if value is not None and not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class SegmentRole:
    """A named, contiguous parameter range of a spiral's underlying path."""

    name: str
    t0: float
    t1: float

    @property
    def length(self) -> float:
        return self.t1 - self.t0


@dataclass
class SpiralPath:
    """A constructed spiral: the polygonal path plus its anatomy.

    ``roles`` tile the parameter interval of ``path`` exactly, in order, so
    that each named construction segment can be recovered with
    :meth:`role_subpath`.  ``meta`` carries the construction-specific
    diagnostics (marked points, stage lengths, landing margins, ...).
    """

    path: PolyPath
    kind: str
    roles: tuple[SegmentRole, ...]
    params: SpiralParams
    template: Template
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.roles:
            raise ValueError("a spiral needs at least one segment role")
        # Long spirals park the parameter at ~1e10 and beyond, where a few
        # ulps of cumulative-length drift dwarf any absolute tolerance.
        tol = 1e-6 * max(1.0, abs(self.path.t_start), abs(self.path.t_end))
        cursor = self.path.t_start
        for role in self.roles:
            if abs(role.t0 - cursor) > tol:
                raise ValueError(
                    f"role {role.name!r} starts at {role.t0}, expected {cursor}"
                )
            cursor = role.t1
        if abs(cursor - self.path.t_end) > tol:
            raise ValueError("roles do not tile the path parameter interval")

    def role(self, name: str) -> SegmentRole:
        for r in self.roles:
            if r.name == name:
                return r
        raise KeyError(name)

    def role_subpath(self, name: str) -> PolyPath:
        r = self.role(name)
        return self.path.subpath(r.t0, r.t1)

    def pieces(self) -> list[PolyPath]:
        """Split the path along the boundaries recorded in ``meta['pieces']``.

        For backward spirals these are the Z-pieces (last wall first) followed
        by the terminal segment; forward spirals record the ``zeta`` prefix and
        the wall-by-wall hops.  Pieces are rebuilt from the recorded vertex
        ranges when available (the parametrization of a long spiral can exceed
        the float resolution of a single short leg), falling back to
        parameter-range extraction.
        """
        slices = self.meta.get("piece_vertices")
        if slices:
            return [
                PolyPath(self.path.geom, self.meta["raw_vertices"][i0 : i1 + 1])
                for _, i0, i1 in slices
            ]
        bounds = self.meta.get("pieces")
        if not bounds:
            raise ValueError("this spiral records no piece boundaries")
        return [self.path.subpath(t0, t1) for _, t0, t1 in bounds]


def _role_builder(start: float):
    roles: list[SegmentRole] = []
    cursor = [start]

    def push(name: str, length: float) -> None:
        roles.append(SegmentRole(name, cursor[0], cursor[0] + length))
        cursor[0] += length

    return roles, push, cursor


# ---------------------------------------------------------------------------
# Backward spirals
# ---------------------------------------------------------------------------


def backward_spiral(
    t: Template,
    x_n: ChartPoint,
    p: SpiralParams,
    *,
    v_n_length: Optional[float] = None,
    terminal_direction: str = "continue",
    terminal_length: Optional[float] = None,
    max_extent: Optional[float] = None,
) -> SpiralPath:
    """Build the backward spiral from ``x_n`` in the last wall down to wall 0.

    Stage ``i`` (walls ``n`` down to ``1``) appends ``Z_i = v_i . h_i .
    eta_{i-1}``:

    * ``v_i`` -- vertical leg in wall ``i``.  Its length is ``max(2 q Q, 1)``
      for the first stage (overridable via ``v_n_length``) and afterwards
      strictly greater than ``rho * max(prev_gap, len(h_i))`` where
      ``prev_gap`` is the endpoint separation of the previous Z-piece.
    * ``h_i`` -- horizontal leg to the near singular line of wall ``i``.
    * ``eta_{i-1}`` -- perpendicular crossing of strip ``i-1``.

    The terminal segment in wall 0 either continues the last crossing
    straight (``terminal_direction='continue'``) or turns onto the main
    vertical ray (``terminal_direction='zeta'``); its length defaults to the
    stage-growth value so the finished chain still satisfies the growth
    condition piece-by-piece.

    ``max_extent`` optionally caps every leg length; exceeding it raises
    ``stage-overflow`` (the walls themselves are unbounded planes).
    """
    n = t.n_strips
    if n < 1:
        raise QRLabError("no-walls", "backward spirals need at least one strip")
    if p.rho is None:
        raise ValueError("SpiralParams.rho is required for backward spirals")
    rho_floor = p.q / p.delta + p.Q
    if not (p.rho > rho_floor):
        raise QRLabError(
            "rho-too-small",
            f"rho={p.rho} must exceed q/delta + Q = {rho_floor}",
        )
    if terminal_direction not in ("continue", "zeta"):
        raise ValueError(f"unknown terminal_direction {terminal_direction!r}")

    last_wall = Template.wall_chart(n)
    start_xy = t.realize(t.canonical(x_n), last_wall)
    if start_xy is None:
        raise ValueError("x_n must lie in the last wall of the template")
    start = ChartPoint(last_wall, start_xy)

    def _check_extent(value: float, what: str) -> None:
        if not math.isfinite(value):
            raise QRLabError("stage-overflow", f"{what} is not finite")
        if max_extent is not None and value > max_extent:
            raise QRLabError(
                "stage-overflow",
                f"{what} = {value} exceeds the extent cap {max_extent}",
            )

    vertices: list[ChartPoint] = []
    roles, push, _cursor = _role_builder(0.0)
    piece_bounds: list[tuple[int, float, float]] = []
    piece_slices: list[tuple[int, int, int]] = []
    stage_lengths: list[float] = []
    entry_points: list[ChartPoint] = [start]

    u, v = float(start.xy[0]), float(start.xy[1])
    vertices.append(start)
    prev_gap = 0.0

    for i in range(n, 0, -1):
        wall = Template.wall_chart(i)
        piece_t0 = roles[-1].t1 if roles else 0.0
        piece_i0 = len(vertices) - 1
        h_len = abs(u)
        if i == n:
            s_i = max(2.0 * p.q * p.Q, 1.0) if v_n_length is None else float(v_n_length)
            if s_i < 0:
                raise ValueError("v_n_length must be non-negative")
        else:
            s_i = p.rho * (1.0 + STAGE_SLACK) * max(prev_gap, h_len)
        _check_extent(s_i, f"v_{i} length")
        _check_extent(abs(v) + s_i, f"wall-{i} vertical extent")

        # v_i: vertical leg.
        v_top = v + s_i
        if s_i > 0:
            vertices.append(ChartPoint(wall, (u, v_top)))
        push(f"v_{i}", s_i)

        # h_i: horizontal leg onto the near singular line (u = 0).
        if h_len > 0:
            vertices.append(ChartPoint(wall, (0.0, v_top)))
        push(f"h_{i}", h_len)
        stage_lengths.append(s_i)

        # eta_{i-1}: perpendicular crossing of strip i-1.
        delta_im1 = float(t.widths[i - 1])
        tau = t.orientations[i - 1] * (v_top - t.offsets[i - 1])
        strip = Template.strip_chart(i - 1)
        if delta_im1 > 0:
            vertices.append(ChartPoint(strip, (0.0, tau)))
        push(f"eta_{i - 1}", delta_im1)

        landing = ChartPoint(strip, (0.0, tau))
        piece_bounds.append((i, piece_t0, roles[-1].t1))
        piece_slices.append((i, piece_i0, len(vertices) - 1))
        prev_gap = t.distance(entry_points[-1], landing)
        entry_points.append(landing)

        # Coordinates of the landing point in wall i-1: parameter tau along
        # the far singular line, direction e^+_{i-1}.
        eplus = t._eplus[i - 1]
        u, v = tau * float(eplus[0]), tau * float(eplus[1])
        if t.realize(landing, Template.wall_chart(i - 1)) is None:
            raise ValueError("internal: landing point failed to transfer")
        vertices.append(ChartPoint(Template.wall_chart(i - 1), (u, v)))

    # Terminal segment in wall 0.
    term_len = terminal_length
    if term_len is None:
        term_len = max(p.rho * (1.0 + STAGE_SLACK) * prev_gap, 1.0)
    _check_extent(term_len, "terminal length")
    a0 = v  # landing parameter on the main vertical line of wall 0
    if terminal_direction == "continue":
        endpoint = ChartPoint(0, (u - term_len, v))
    else:  # "zeta": follow the main ray upward
        endpoint = ChartPoint(0, (u, v + term_len))
    piece_t0 = roles[-1].t1
    piece_i0 = len(vertices) - 1
    if term_len > 0:
        vertices.append(endpoint)
    push("terminal", term_len)
    piece_bounds.append((0, piece_t0, roles[-1].t1))
    piece_slices.append((0, piece_i0, len(vertices) - 1))

    path = PolyPath(t, vertices)
    if abs(path.length - roles[-1].t1) > 1e-6 * max(1.0, path.length):
        raise ValueError("internal: role lengths do not match the path length")

    return SpiralPath(
        path=path,
        kind="backward",
        roles=tuple(roles),
        params=p,
        template=t,
        meta={
            "pieces": piece_bounds,
            "piece_vertices": piece_slices,
            "raw_vertices": vertices,
            "stage_lengths": stage_lengths,
            "entry_points": entry_points,
            "terminal_direction": terminal_direction,
            "terminal_length": term_len,
            "landing_zeta_param": a0,
        },
    )


# ---------------------------------------------------------------------------
# Concatenation criterion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    """Outcome of one hypothesis of the concatenation criterion.

    ``margin`` is the worst (smallest) slack observed; negative means the
    condition fails, and ``witness`` identifies where.
    """

    ok: bool
    margin: float
    witness: dict


@dataclass(frozen=True)
class ConcatReport:
    conditions: dict[int, ConditionCheck]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.conditions.values())

    def failing(self) -> list[int]:
        return [k for k, c in sorted(self.conditions.items()) if not c.ok]


def verify_concat_conditions(
    segments: Sequence[PolyPath],
    q: float,
    Q: float,
    delta: float,
    rho: float,
    *,
    sample_step: Optional[float] = None,
    tol: float = 1e-9,
) -> ConcatReport:
    """Check the five hypotheses of the concatenation criterion.

    For an endpoint-chained family ``gamma_1, ..., gamma_n`` of ``(q, Q)``
    quasi-geodesics the criterion requires

    1. the first piece has endpoint separation at least ``2 q Q``;
    2. consecutive pieces chain: end of ``gamma_i`` equals start of
       ``gamma_{i+1}``;
    3. every two-piece concatenation ``gamma_i . gamma_{i+1}`` is again a
       ``(q, Q)`` quasi-geodesic;
    4. endpoint separations grow: ``d_i >= rho * d_{i-1}``;
    5. every point of ``gamma_{i+1}`` stays at distance at least
       ``delta * d_i`` from the start of ``gamma_i``.

    The report records, per condition, the worst margin and the extremal
    witness (piece index, parameters, measured values).  Comparisons use an
    absolute-plus-relative tolerance so that constructions meeting a bound
    with equality pass.
    """
    if len(segments) < 2:
        raise ValueError("need at least two segments")
    geom = segments[0].geom
    for s in segments[1:]:
        if s.geom is not geom:
            raise ValueError("all segments must share one geometry")
    dist = geom.distance if hasattr(geom, "distance") else geom.segment_length

    def slack(value: float, bound: float) -> float:
        return value - bound + tol * max(1.0, abs(bound))

    gaps = np.array(
        [dist(segments[i].end, segments[i + 1].start) for i in range(len(segments) - 1)]
    )
    d_ends = np.array([dist(s.start, s.end) for s in segments])

    # (1) first piece long enough.
    m1 = slack(d_ends[0], 2.0 * q * Q)
    c1 = ConditionCheck(m1 >= 0, float(m1), {"d_first": float(d_ends[0]), "bound": 2.0 * q * Q})

    # (2) endpoint chaining.
    worst_gap = int(np.argmax(gaps)) if len(gaps) else 0
    m2 = -float(gaps[worst_gap]) + tol if len(gaps) else tol
    c2 = ConditionCheck(
        bool(np.all(gaps <= tol)),
        m2,
        {"i": worst_gap + 1, "gap": float(gaps[worst_gap]) if len(gaps) else 0.0},
    )

    # (3) pairwise concatenations stay (q, Q) quasi-geodesics.
    m3 = math.inf
    w3: dict = {}
    ok3 = True
    for i in range(len(segments) - 1):
        if gaps[i] > max(tol, ENDPOINT_TOL):
            ok3 = False
            m3 = -float(gaps[i])
            w3 = {"i": i + 1, "reason": "pieces do not chain"}
            break
        joint = PolyPath(
            geom,
            list(segments[i].vertices) + list(segments[i + 1].vertices),
            start_time=segments[i].t_start,
        )
        step = sample_step if sample_step is not None else max(joint.length / 96.0, 1e-6)
        fitted = qg_fit(joint, Q, distance=dist, sample_step=step)
        margin = slack(q, fitted.q)
        if margin < m3:
            m3 = margin
            w3 = {"i": i + 1, "fitted_q": fitted.q, "q": q}
        if margin < 0:
            ok3 = False
    c3 = ConditionCheck(ok3, float(m3), w3)

    # (4) geometric growth of endpoint separations.
    m4 = math.inf
    w4: dict = {}
    for i in range(1, len(segments)):
        margin = slack(d_ends[i], rho * d_ends[i - 1])
        if margin < m4:
            m4 = margin
            w4 = {
                "i": i + 1,
                "d_i": float(d_ends[i]),
                "rho_d_prev": float(rho * d_ends[i - 1]),
            }
    c4 = ConditionCheck(m4 >= 0, float(m4), w4)

    # (5) later pieces keep their distance from the previous start.
    m5 = math.inf
    w5: dict = {}
    for i in range(len(segments) - 1):
        base = segments[i].start
        nxt = segments[i + 1]
        step = sample_step if sample_step is not None else max(nxt.length / 64.0, 1e-6)
        ts = nxt.sample_times(step)
        pts = nxt.points_at(ts)
        dvals = pair_distances(dist, [base] * len(pts), pts)
        jmin = int(np.argmin(dvals))
        dmin, tmin = float(dvals[jmin]), float(ts[jmin])
        margin = slack(dmin, delta * d_ends[i])
        if margin < m5:
            m5 = margin
            w5 = {
                "i": i + 1,
                "t": float(tmin),
                "d_min": float(dmin),
                "bound": float(delta * d_ends[i]),
            }
    c5 = ConditionCheck(m5 >= 0, float(m5), w5)

    return ConcatReport(conditions={1: c1, 2: c2, 3: c3, 4: c4, 5: c5})


def constructqg_constants(q: float, Q: float, delta: float, rho: float) -> tuple[float, float]:
    """Quasi-geodesic constants guaranteed by the concatenation criterion.

    For adjacent-parameter pairs the upper bound comes with constants
    ``(2q + qQ, 2Q)``.  For separated pairs the lower bound is assembled from

    * ``kappa  = min(2q / (delta rho), q / (delta (rho - 1)))`` -- the
      fraction of ``d(gamma(t2), a_{j-1})`` that the earlier pieces can eat,
    * ``c1 = (1 - kappa) / q`` and ``c2 = (1 - kappa) Q + (q + 1) Q``,
    * ``c3 = (q^2 + q/2) / (rho - 1)`` -- bounding the back-tail
      ``a_{j-1} - t1`` by ``c3 (a_j - a_{j-1})``,

    giving ``L = max(2q + qQ, (2 + c3) / c1)`` and ``C = max(2Q, c2, c3)``.
    Requires ``rho > q/delta + Q``; additionally ``kappa`` must stay below 1
    for the lower bound to be usable (automatic once ``Q >= 1``).
    """
    if not (q >= 1 and Q >= 0 and 0 < delta <= 1):
        raise ValueError("need q >= 1, Q >= 0 and delta in (0, 1]")
    floor = q / delta + Q
    if not (rho > floor):
        raise QRLabError(
            "rho-too-small", f"rho={rho} must exceed q/delta + Q = {floor}"
        )
    kappa = min(2.0 * q / (delta * rho), q / (delta * (rho - 1.0)))
    if kappa >= 1.0:
        raise QRLabError(
            "rho-too-small",
            f"rho={rho} leaves no positive lower-bound slope (kappa={kappa:.6g} >= 1); "
            f"need rho > q/delta + 1",
        )
    c1 = (1.0 - kappa) / q
    c2 = (1.0 - kappa) * Q + (q + 1.0) * Q
    c3 = (q * q + q / 2.0) / (rho - 1.0)
    L = max(2.0 * q + q * Q, (2.0 + c3) / c1)
    C = max(2.0 * Q, c2, c3)
    if not (math.isfinite(L) and L >= 1.0):
        raise ValueError("internal: computed L is not a usable constant")
    return L, C


# ---------------------------------------------------------------------------
# Forward spirals
# ---------------------------------------------------------------------------


def _ell_plus_sign(t: Template, i: int) -> float:
    """Orientation of the marked ray on the far singular line of wall ``i``.

    Chosen so the projection of the next wall origin onto that line lies on
    the ray; ties (zero gluing offset) break toward the positive direction.
    """
    s = -t.orientations[i] * t.offsets[i]
    return 1.0 if s >= 0 else -1.0


def _forward_backbone(
    t: Template, r: float, kappas: Sequence[float], last_is_z: bool
) -> tuple[list[ChartPoint], list[tuple[str, float]], list[ChartPoint], list[ChartPoint]]:
    """Vertices and leg lengths shared by the two forward constructions.

    ``kappas[i]`` is the distance of ``z_i`` from the origin of wall ``i``
    (``i >= 1``); ``z_0`` is the point at parameter ``r`` on the main ray.
    The walk is ``o -> z_0 -> y_0 -> z_1 -> y_1 -> ...``; it stops after the
    final ``z`` when ``last_is_z`` (Type II) and after the final ``y``
    otherwise (Type I).
    """
    verts: list[ChartPoint] = [t.base_point()]
    legs: list[tuple[str, float]] = []
    z_points: list[ChartPoint] = []
    y_points: list[ChartPoint] = []

    verts.append(t.zeta_point(r))
    legs.append(("zeta", r))
    z_points.append(verts[-1])
    line_param = r  # parameter of the current z on the far line of its wall

    n_hops = len(kappas)
    for i in range(n_hops + (0 if last_is_z else 1)):
        # crossing of strip i: z_i -> y_i
        delta_i = float(t.widths[i])
        tau = line_param  # strip-side parameter equals the far-line parameter
        y = ChartPoint(
            Template.wall_chart(i + 1),
            (0.0, float(t.offsets[i] + t.orientations[i] * tau)),
        )
        if delta_i > 0:
            verts.append(ChartPoint(Template.strip_chart(i), (delta_i, tau)))
        else:
            verts.append(y)
        legs.append((f"cross_{i}", delta_i))
        y_points.append(y)
        if i >= n_hops:
            break
        # wall leg: y_i -> z_{i+1} inside wall i+1
        kappa = kappas[i]
        sigma = _ell_plus_sign(t, i + 1)
        eplus = t._eplus[i + 1]
        z = ChartPoint(
            Template.wall_chart(i + 1),
            (sigma * kappa * float(eplus[0]), sigma * kappa * float(eplus[1])),
        )
        wall_len = float(np.hypot(*(z.xy - y.xy)))
        verts.append(z)
        legs.append((f"wall_{i + 1}", wall_len))
        z_points.append(z)
        line_param = sigma * kappa

    return verts, legs, z_points, y_points


def forward_spiral_I(
    t: Template, r: float, k: int, rho0: float, C: float
) -> SpiralPath:
    """Forward spiral of Type I: ``kappa_i = r (1 + rho0)^i``.

    The path runs ``zeta|_[0, r]``, crosses strip 0, then alternates wall
    legs ``[y_{i-1}, z_i]`` and strip crossings ``[z_i, y_i]`` up to
    ``y_{k-1}`` in wall ``k``.  Preconditions: the wall-origin gaps satisfy
    ``w_i <= C (1 + rho0)^i`` (else ``excursion-too-fast``) and ``r > C``
    (else ``r-too-small``).  The stronger seed condition ``81 mu^2 < r/2``
    (with ``mu`` the template's fitted chain constant) is what certifies the
    length/distance ratio bound; it is recorded as
    ``meta['ratio_certified']`` rather than enforced, since the construction
    itself only needs ``r > C``.
    """
    if not (0.0 < rho0 < 0.25):
        raise ValueError(f"rho0 must lie in (0, 1/4), got {rho0}")
    if not (C > 0 and math.isfinite(C)):
        raise ValueError(f"C must be positive, got {C}")
    n = t.n_strips
    if n < 2:
        raise QRLabError("no-walls", "forward spirals need at least two strips")
    if not (1 <= k <= n):
        raise QRLabError("no-walls", f"k={k} must lie in 1..{n}")

    stats = p_chain_stats(t, rho0=rho0)
    if stats.least_C > C * (1.0 + 1e-12):
        i_bad = int(np.argmax(stats.w / (1.0 + rho0) ** np.arange(n)))
        raise QRLabError(
            "excursion-too-fast",
            f"w_{i_bad} = {stats.w[i_bad]:.6g} exceeds C (1 + rho0)^{i_bad} "
            f"= {C * (1.0 + rho0) ** i_bad:.6g}",
        )
    if not (r > C):
        raise QRLabError("r-too-small", f"need r > C, got r={r}, C={C}")
    mu_hat = stats.mu_hat
    ratio_certified = bool(81.0 * mu_hat * mu_hat < r / 2.0)

    kappas = [r * (1.0 + rho0) ** i for i in range(1, k)]
    verts, legs, z_points, y_points = _forward_backbone(t, r, kappas, last_is_z=False)

    roles, push, _ = _role_builder(0.0)
    for name, length in legs:
        push(name, length)
    path = PolyPath(t, verts)

    landings = []
    for i, y in enumerate(y_points):
        kappa_i = r * (1.0 + rho0) ** i
        d_y_p = t.distance(y, t.p_point(i + 1))
        landings.append((i, float(d_y_p), float(kappa_i)))
        if i >= 1 and d_y_p > kappa_i * (1.0 + 1e-9):
            raise ValueError(
                f"internal: landing check failed at i={i}: d={d_y_p}, kappa={kappa_i}"
            )

    params = SpiralParams(rho0=rho0, r=r, C=C)
    return SpiralPath(
        path=path,
        kind="forward-I",
        roles=tuple(roles),
        params=params,
        template=t,
        meta={
            "k": k,
            "kappas": [r] + kappas,
            "z_points": z_points,
            "y_points": y_points,
            "landings": landings,
            "mu_hat": mu_hat,
            "least_C": stats.least_C,
            "ratio_certified": ratio_certified,
            "ratio_bound": forward_ratio_bound(t, rho0, mu_hat=mu_hat),
            "pieces": [(i, role.t0, role.t1) for i, role in enumerate(roles)],
        },
    )


def forward_ratio_bound(
    t: Template, rho0: float, *, mu_hat: Optional[float] = None
) -> float:
    """Upper bound ``(72 mu / rho0)(1 + rho0)`` for length/distance ratios
    along forward spirals, with ``mu`` the template's fitted chain constant."""
    if mu_hat is None:
        mu_hat = p_chain_stats(t, rho0=rho0).mu_hat
    return (72.0 * mu_hat / rho0) * (1.0 + rho0)


def forward_spiral_II(
    t: Template, r: float, times: Sequence[float], rho0: float, *, strict: bool = False
) -> SpiralPath:
    """Forward spiral of Type II driven by a time profile ``t_1 < ... < t_k``.

    The profile must split at its last step: ``t_k - t_{k-1} >= r (1+rho0)^k``
    (with ``t_0 = 0``), otherwise ``bad-time-profile``; non-increasing times
    are likewise fatal.  The companion condition that earlier gaps stay below
    ``r (1+rho0)^i`` is diagnostic: violations are recorded in
    ``meta['early_gap_violations']`` (and raise only with ``strict=True``).
    The marked points use the damped scale ``kappa_i = r rho0 (1+rho0)^i``
    and the path ends at ``z_{k-1}``.
    """
    if not (0.0 < rho0 < 1.0 / 16.0):
        raise ValueError(f"rho0 must lie in (0, 1/16), got {rho0}")
    if not (r > 0 and math.isfinite(r)):
        raise ValueError(f"r must be positive, got {r}")
    times = [float(x) for x in times]
    k = len(times)
    if k < 1:
        raise ValueError("need at least one time")
    full = [0.0] + times
    diffs = np.diff(full)
    if np.any(~np.isfinite(diffs)) or np.any(diffs <= 0):
        raise QRLabError("bad-time-profile", "times must be positive and increasing")
    early_violations = []
    for i in range(1, k):
        bound = r * (1.0 + rho0) ** i
        if not (diffs[i - 1] < bound * (1.0 + 1e-12)):
            early_violations.append((i, float(diffs[i - 1]), float(bound)))
    if strict and early_violations:
        i, gap, bound = early_violations[0]
        raise QRLabError(
            "bad-time-profile",
            f"gap t_{i} - t_{i - 1} = {gap:.6g} must stay below "
            f"r (1+rho0)^{i} = {bound:.6g}",
        )
    last_bound = r * (1.0 + rho0) ** k
    if not (diffs[k - 1] >= last_bound):
        raise QRLabError(
            "bad-time-profile",
            f"final gap {diffs[k - 1]:.6g} must reach r (1+rho0)^{k} = {last_bound:.6g}",
        )

    n = t.n_strips
    if n < 1 or k - 1 > n:
        raise QRLabError("no-walls", f"profile of length {k} needs {k - 1} strips")

    kappas = [r * rho0 * (1.0 + rho0) ** i for i in range(1, k)]
    verts, legs, z_points, y_points = _forward_backbone(t, r, kappas, last_is_z=True)

    roles, push, _ = _role_builder(0.0)
    for name, length in legs:
        push(name, length)
    path = PolyPath(t, verts)

    kappa_k = r * rho0 * (1.0 + rho0) ** k
    consequence = kappa_k / rho0 < diffs[k - 1] * (1.0 + 1e-12)
    landings = []
    for i, y in enumerate(y_points):
        if i == 0:
            continue
        kappa_i = r * rho0 * (1.0 + rho0) ** i
        w_i = float(t.w[i])
        d_y_p = t.distance(y, t.p_point(i + 1))
        landings.append((i, float(d_y_p), float(kappa_i + 2.0 * w_i)))
        if d_y_p > (kappa_i + 2.0 * w_i) * (1.0 + 1e-9):
            raise ValueError(
                f"internal: landing check failed at i={i}: d={d_y_p}, "
                f"bound={kappa_i + 2.0 * w_i}"
            )

    params = SpiralParams(rho0=rho0, r=r)
    return SpiralPath(
        path=path,
        kind="forward-II",
        roles=tuple(roles),
        params=params,
        template=t,
        meta={
            "k": k,
            "times": times,
            "kappas": kappas + [kappa_k],
            "z_points": z_points,
            "y_points": y_points,
            "landings": landings,
            "split_gap": float(diffs[k - 1]),
            "split_bound": float(last_bound),
            "early_gap_violations": early_violations,
            "kappa_over_rho0_ok": bool(consequence),
            "pieces": [(i, role.t0, role.t1) for i, role in enumerate(roles)],
        },
    )


# ---------------------------------------------------------------------------
# Growth of the Type I family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthReport:
    """Measured length growth of a Type I family ``{L_{r,k}}``.

    ``ratios[j]`` compares consecutive lengths with the strip width removed:
    ``(len_{k+1} - delta_k) / len_k``; the claim is that it drops below
    ``1 + rho`` (``rho = 3 rho0``) from some index ``k0`` on.
    """

    rho0: float
    rho: float
    ks: tuple[int, ...]
    lengths: tuple[float, ...]
    deltas: tuple[float, ...]
    ratios: tuple[float, ...]
    margins: tuple[float, ...]
    k0: Optional[int]

    @property
    def holds_everywhere(self) -> bool:
        return self.k0 is not None and self.k0 <= self.ks[0]


def growth_check(family: Sequence[SpiralPath]) -> GrowthReport:
    """Check ``len(L_{r,k+1}) < (1 + 3 rho0) len(L_{r,k}) + delta_k`` and
    report the least index from which it holds for the rest of the family."""
    if len(family) < 2:
        raise ValueError("need at least two family members")
    kinds = {s.kind for s in family}
    if kinds != {"forward-I"}:
        raise ValueError(f"growth_check expects a Type I family, got kinds {kinds}")
    r0 = family[0].params.r
    rho0 = family[0].params.rho0
    t = family[0].template
    for s in family[1:]:
        if s.params.r != r0 or s.params.rho0 != rho0 or s.template is not t:
            raise ValueError("family members must share (template, r, rho0)")
    members = sorted(family, key=lambda s: s.meta["k"])
    ks = [int(s.meta["k"]) for s in members]
    if ks != list(range(ks[0], ks[0] + len(ks))):
        raise ValueError(f"family indices must be consecutive, got {ks}")

    rho = 3.0 * rho0
    lengths = [s.path.length for s in members]
    deltas, ratios, margins = [], [], []
    holds = []
    for j in range(len(members) - 1):
        k = ks[j]
        delta_k = float(t.widths[k]) if k < t.n_strips else 0.0
        lhs = lengths[j + 1]
        rhs = (1.0 + rho) * lengths[j] + delta_k
        deltas.append(delta_k)
        ratios.append((lengths[j + 1] - delta_k) / lengths[j])
        margins.append(rhs - lhs)
        holds.append(lhs < rhs)

    k0: Optional[int] = None
    for j in range(len(holds) - 1, -1, -1):
        if not holds[j]:
            break
        k0 = ks[j]
    return GrowthReport(
        rho0=rho0,
        rho=rho,
        ks=tuple(ks),
        lengths=tuple(lengths),
        deltas=tuple(deltas),
        ratios=tuple(ratios),
        margins=tuple(margins),
        k0=k0,
    )
