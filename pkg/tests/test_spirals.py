"""Spiral constructions: stage growth, concatenation criterion, ratios."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrlab import (
    PolyPath,
    QRLabError,
    SpiralParams,
    backward_spiral,
    build_template,
    constructqg_constants,
    forward_ratio_bound,
    forward_spiral_I,
    forward_spiral_II,
    growth_check,
    p_chain_stats,
    qg_fit,
    random_template,
    verify_concat_conditions,
)


def fitted(sp, Q):
    t = sp.template
    step = max(sp.path.length / 512.0, 0.25)
    return qg_fit(sp.path, Q, t.distance, step)


class TestBackwardSpiral:
    def test_roles_tile_and_land_on_base_wall(self):
        t = build_template([1.0, 1.0, 1.0])
        params = SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=4.0)
        sp = backward_spiral(t, t.wall_point(3, 2.0, 3.0), params)
        assert sp.kind == "backward"
        assert sp.path.end.chart == 0
        names = [r.name for r in sp.roles]
        assert names[0].startswith("v")
        assert names[-1] == "terminal"

    def test_rho_floor_enforced(self):
        t = build_template([1.0, 1.0])
        with pytest.raises(QRLabError) as e:
            backward_spiral(t, t.wall_point(2, 1.0, 1.0), SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=2.5))
        assert e.value.code == "rho-too-small"

    def test_max_extent_guard(self):
        t = build_template([1.0] * 4)
        with pytest.raises(QRLabError) as e:
            backward_spiral(
                t, t.wall_point(4, 2.0, 3.0), SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=4.0),
                max_extent=10.0,
            )
        assert e.value.code == "stage-overflow"

    def test_fit_within_construction_bound(self):
        rng = np.random.default_rng(1)
        q, Q, delta = 2.0, 1.0, 1.0
        rho = q / delta + Q + 1.0
        L, C = constructqg_constants(q, Q, delta, rho)
        params = SpiralParams(q=q, Q=Q, delta=delta, rho=rho)
        for _ in range(4):
            n = int(rng.integers(2, 6))
            t = random_template(rng, n)
            sp = backward_spiral(t, t.wall_point(n, 2.0, 3.0), params)
            fit = fitted(sp, C)
            assert fit.q <= L * (1.0 + 1e-9)

    def test_z_piece_constant_below_3_sqrt2(self):
        # a Z-path (vertical leg, horizontal leg, perpendicular crossing)
        # in a width-1 template stays a (3 sqrt(2), 0)-quasi-geodesic
        t = build_template([1.0])
        params = SpiralParams(q=math.sqrt(2.0), Q=0.0, delta=1.0, rho=math.sqrt(2.0) + 1.0)
        sp = backward_spiral(t, t.wall_point(1, 2.0, 3.0), params)
        z = sp.pieces()[0]
        fit = qg_fit(z, 0.0, t.distance, max(z.length / 256.0, 0.05))
        assert fit.q <= 3.0 * math.sqrt(2.0) + 1e-9


class TestConcatCriterion:
    def _chain(self, t, params):
        sp = backward_spiral(t, t.wall_point(t.n_strips, 2.0, 3.0), params)
        return sp.pieces()

    def test_constructed_chain_passes_all_conditions(self):
        t = build_template([1.0, 1.0, 1.0])
        params = SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=4.0)
        segs = self._chain(t, params)
        report = verify_concat_conditions(segs, 2.0, 1.0, 1.0, 4.0)
        assert report.passed, report.failing()

    def test_growth_violation_detected(self):
        # shrink the final piece so endpoint separations stop growing:
        # condition (4) d_i >= rho d_{i-1} must flag it
        t = build_template([1.0, 1.0, 1.0])
        params = SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=4.0)
        segs = self._chain(t, params)
        last = segs[-1]
        cut = last.subpath(last.t_start, last.t_start + 0.2 * last.length)
        broken = segs[:-1] + [cut]
        report = verify_concat_conditions(broken, 2.0, 1.0, 1.0, 4.0)
        assert not report.passed
        assert 4 in report.failing()

    def test_chaining_violation_detected(self):
        t = build_template([1.0, 1.0, 1.0])
        params = SpiralParams(q=2.0, Q=1.0, delta=1.0, rho=4.0)
        segs = self._chain(t, params)
        shifted = PolyPath(
            t,
            [type(v)(v.chart, v.xy + np.array([0.0, 0.5])) for v in segs[1].vertices],
            start_time=segs[1].t_start,
        )
        report = verify_concat_conditions([segs[0], shifted] + segs[2:], 2.0, 1.0, 1.0, 4.0)
        assert 2 in report.failing()

    def test_bound_formula_values(self):
        # closed forms at (q, Q, delta, rho) = (2, 1, 1, 4):
        # kappa = min(2*2/(1*4), 2/(1*3)) = 2/3, c1 = (1/3)/2 = 1/6,
        # c2 = 1/3 + 3 = 10/3, c3 = (4 + 1)/3 = 5/3,
        # L = max(2q + qQ, (2 + c3)/c1) = max(6, 22) = 22,
        # C = max(2Q, c2, c3) = 10/3
        L, C = constructqg_constants(2.0, 1.0, 1.0, 4.0)
        assert L == pytest.approx(22.0)
        assert C == pytest.approx(10.0 / 3.0)

    def test_bound_requires_rho_above_floor(self):
        with pytest.raises(QRLabError):
            constructqg_constants(2.0, 1.0, 1.0, 3.0)


@pytest.fixture(scope="module")
def flat_template():
    return build_template([1.0] * 10)


class TestForwardSpirals:

    def test_type_I_ratio_within_bound(self, flat_template):
        t = flat_template
        rho0 = 0.1
        stats = p_chain_stats(t, rho0=rho0)
        r = max(2.0 * stats.least_C, 81.0 * stats.mu_hat**2 * 2.0 + 1.0)
        sp = forward_spiral_I(t, r, k=6, rho0=rho0, C=stats.least_C)
        assert sp.meta["ratio_certified"]
        bound = forward_ratio_bound(t, rho0, mu_hat=stats.mu_hat)
        d = t.distance(sp.path.start, sp.path.end)
        assert sp.path.length / d <= bound

    def test_type_I_requires_r_above_C(self, flat_template):
        with pytest.raises(QRLabError) as e:
            forward_spiral_I(flat_template, 0.5, k=3, rho0=0.1, C=1.0)
        assert e.value.code == "r-too-small"

    def test_type_I_growth_inequality_holds_eventually(self, flat_template):
        t = flat_template
        rho0 = 0.1
        family = [forward_spiral_I(t, 40.0, k=k, rho0=rho0, C=1.0) for k in range(2, 9)]
        report = growth_check(family)
        assert report.rho == pytest.approx(3 * rho0)
        # from some k0 on, every ratio stays below 1 + rho
        ok = [r < 1.0 + report.rho for r in report.ratios]
        assert any(ok)
        k0 = ok.index(True)
        assert all(ok[k0:])

    def test_type_II_follows_profile(self, flat_template):
        t = flat_template
        times = [float((i + 1) ** 2) for i in range(6)]
        sp = forward_spiral_II(t, 5.0, times, rho0=0.05)
        assert sp.kind == "forward-II"
        assert sp.path.start.chart == 0

    def test_type_II_rejects_decreasing_times(self, flat_template):
        with pytest.raises(QRLabError) as e:
            forward_spiral_II(flat_template, 5.0, [4.0, 2.0, 9.0], rho0=0.05)
        assert e.value.code == "bad-time-profile"


class TestParamValidation:
    @given(
        st.floats(0.2, 0.9),
        st.floats(0.0, 3.0),
    )
    @settings(max_examples=20, deadline=None)
    def test_params_reject_sub_unit_q(self, q, Q):
        with pytest.raises(ValueError):
            SpiralParams(q=q, Q=Q)

    def test_params_accept_defaults(self):
        p = SpiralParams()
        assert p.q == 1.0 and p.Q == 0.0 and p.delta == 1.0
