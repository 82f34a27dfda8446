"""Path primitives: constant fitting, slicing, concatenation, surgeries."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrlab import (
    PLANE,
    ChartPoint,
    PolyPath,
    QGConstants,
    QRLabError,
    bridge,
    build_template,
    concat,
    fellow_travel_surgery,
    fit_symmetric_constant,
    nearest_point_on_path,
    nearest_point_surgery,
    plane_point,
    qg_fit,
    restrict,
    segment_to_ray_surgery,
    surgery,
)

SQRT2 = math.sqrt(2.0)


def plane_path(*coords, start_time=0.0):
    return PolyPath(PLANE, [plane_point(x, y) for x, y in coords], start_time=start_time)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


class TestQGFit:
    def test_straight_segment_is_geodesic(self):
        p = plane_path((0, 0), (10, 0))
        fit = qg_fit(p, 0.0, PLANE.distance, 0.5)
        assert fit.q == pytest.approx(1.0, abs=1e-12)

    def test_right_angle_two_leg_constant_is_sqrt2(self):
        # equal legs maximize (a + b) / hypot(a, b), attained at the endpoints
        p = plane_path((0, 4), (0, 0), (4, 0))
        fit = qg_fit(p, 0.0, PLANE.distance, 0.25)
        assert fit.q == pytest.approx(SQRT2, abs=1e-9)

    def test_unequal_legs_stay_below_sqrt2(self):
        p = plane_path((0, 7), (0, 0), (2, 0))
        fit = qg_fit(p, 0.0, PLANE.distance, 0.25)
        assert 1.0 < fit.q < SQRT2 + 1e-12

    def test_fit_respects_given_additive_constant(self):
        p = plane_path((0, 4), (0, 0), (4, 0))
        loose = qg_fit(p, 4.0, PLANE.distance, 0.25)
        tight = qg_fit(p, 0.0, PLANE.distance, 0.25)
        assert loose.Q == 4.0
        assert loose.q <= tight.q

    def test_huge_parametrization_keeps_unit_constant(self):
        # cumulative-length rounding at t ~ 1e12 must not leak into q
        p = plane_path((0, 0), (1e12, 0), (2e12, 0), start_time=0.0)
        fit = qg_fit(p, 0.0, PLANE.distance, 1e11)
        assert fit.q == pytest.approx(1.0, rel=1e-9)

    def test_symmetric_constant_solves_closed_form(self):
        p = plane_path((0, 6), (0, 0), (6, 0))
        mu = fit_symmetric_constant(p, PLANE.distance, 0.25)
        # at the endpoint pair: |t - s| = 12, d = 6 sqrt(2);
        # mu solves |t-s|/mu - mu = d
        d = 6 * SQRT2
        expected = (-d + math.sqrt(d * d + 4 * 12)) / 2
        assert mu >= 1.0
        assert mu == pytest.approx(max(1.0, expected), rel=1e-6)

    @given(
        st.lists(
            st.tuples(
                st.floats(-50, 50, allow_nan=False), st.floats(-50, 50, allow_nan=False)
            ),
            min_size=2,
            max_size=6,
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_fitted_constants_are_sound(self, coords):
        pts = [plane_point(x, y) for x, y in coords]
        try:
            p = PolyPath(PLANE, pts)
        except QRLabError:
            return  # all points coincided
        if p.length <= 0:
            return
        step = max(p.length / 64, 1e-3)
        fit = qg_fit(p, 1.0, PLANE.distance, step)
        # the fit is exact on its sample grid; checking at other parameters
        # can exceed it by at most the grid discretization, 2 * step
        ts = np.linspace(p.t_start, p.t_end, 12)
        for s in ts:
            for t in ts:
                d = PLANE.distance(p.point_at(s), p.point_at(t))
                assert abs(t - s) / fit.q - fit.Q <= d + 2 * step + 1e-9
                assert d <= abs(t - s) + 1e-9


# ---------------------------------------------------------------------------
# slicing and chaining
# ---------------------------------------------------------------------------


class TestSliceConcat:
    def test_point_at_interpolates(self):
        p = plane_path((0, 0), (4, 0), (4, 4))
        mid = p.point_at(6.0)
        assert mid.xy == pytest.approx([4.0, 2.0])

    def test_subpath_keeps_clock(self):
        p = plane_path((0, 0), (4, 0), (4, 4))
        s = p.subpath(2.0, 6.0)
        assert s.t_start == pytest.approx(2.0)
        assert s.t_end == pytest.approx(6.0)
        assert s.start.xy == pytest.approx([2.0, 0.0])
        assert s.end.xy == pytest.approx([4.0, 2.0])

    def test_concat_shifts_second_clock(self):
        a = plane_path((0, 0), (3, 0))
        b = plane_path((3, 0), (3, 5))
        c = concat(a, b)
        assert c.length == pytest.approx(8.0)
        assert c.t_end == pytest.approx(8.0)

    def test_concat_rejects_gap(self):
        a = plane_path((0, 0), (3, 0))
        b = plane_path((4, 0), (4, 5))
        with pytest.raises(QRLabError) as e:
            concat(a, b)
        assert e.value.code == "disconnected-concat"

    def test_restrict_marks_first_exit(self):
        p = plane_path((0, 0), (10, 0))
        prefix, tail, marks = restrict(p, 4.0, plane_point(0, 0))
        assert prefix.t_end == pytest.approx(4.0)
        assert tail.t_start == pytest.approx(4.0)
        assert marks.t_r == pytest.approx(4.0)
        assert marks.T_r == pytest.approx(4.0)

    def test_restrict_returning_path_uses_last_entry(self):
        # out to 10, back to 2, out to 12: the tail starts at the last time
        # the path is inside the 5-ball
        p = plane_path((0, 0), (10, 0), (2, 0), (12, 0))
        prefix, tail, marks = restrict(p, 5.0, plane_point(0, 0))
        assert prefix.t_end == pytest.approx(5.0)
        d_tail_start = PLANE.distance(tail.start, plane_point(0, 0))
        assert d_tail_start == pytest.approx(5.0, abs=1e-6)
        assert tail.t_start > prefix.t_end


# ---------------------------------------------------------------------------
# surgeries
# ---------------------------------------------------------------------------


class TestSurgery:
    def test_nearest_point_on_path_prefers_smaller_time(self):
        p = plane_path((0, 0), (10, 0))
        t, y, d = nearest_point_on_path(plane_point(3, 4), p)
        assert t == pytest.approx(3.0)
        assert d == pytest.approx(4.0)

    def test_nearest_point_surgery_contract(self):
        beta = plane_path((0, 0), (20, 0))
        x = plane_point(5, 3)
        out, contract = nearest_point_surgery(x, beta, QGConstants(2.0, 1.0))
        assert contract.q == pytest.approx(6.0)  # 3 q
        assert contract.Q == pytest.approx(1.0)
        assert out.start.xy == pytest.approx([5.0, 3.0])
        assert out.end.xy == pytest.approx([20.0, 0.0])
        fit = qg_fit(out, contract.Q, PLANE.distance, 0.5)
        assert fit.q <= contract.q + 1e-9

    def test_segment_to_ray_surgery_bridges_set_distance(self):
        alpha = plane_path((0, 5), (20, 5))
        beta = plane_path((0, 0), (20, 0))
        out, contract = segment_to_ray_surgery(alpha, beta, QGConstants(1.0, 0.0))
        fit = qg_fit(out, contract.Q, PLANE.distance, 0.5)
        assert fit.q <= contract.q + 1e-9

    def test_fellow_travel_surgery_requires_closeness(self):
        alpha = plane_path((0, 0.5), (20, 0.5))
        beta = plane_path((0, 0), (20, 0))
        out, contract = fellow_travel_surgery(alpha, beta, 10.0, QGConstants(1.0, 0.0))
        fit = qg_fit(out, contract.Q, PLANE.distance, 0.5)
        assert fit.q <= contract.q + 1e-9
        far = plane_path((0, 30), (20, 30))
        with pytest.raises(QRLabError):
            fellow_travel_surgery(far, beta, 10.0, QGConstants(1.0, 0.0))

    def test_surgery_dispatch_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            surgery("fold")

    def test_bridge_in_template_is_geodesic(self):
        t = build_template([1.0, 2.0])
        x = t.wall_point(0, 3.0, 1.0)
        y = t.wall_point(2, 1.0, 2.0)
        g = bridge(t, x, y)
        assert g.length == pytest.approx(t.distance(x, y), rel=1e-9)
