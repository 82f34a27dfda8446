"""Template metric: exact solver, mesh oracle cross-check, invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrlab import (
    QRLabError,
    Template,
    build_template,
    mesh_oracle_distance,
    p_chain_stats,
    random_template,
    standard_template_from_itinerary,
    template_from_json,
)


@pytest.fixture(scope="module")
def plain():
    return build_template([1.0, 2.0, 1.5])


class TestConstruction:
    def test_chart_counts(self, plain):
        assert plain.n_strips == 3
        assert plain.n_walls == 4
        assert plain.n_charts == 7

    def test_negative_width_rejected(self):
        with pytest.raises(ValueError):
            build_template([1.0, -0.5])

    def test_parallel_gluing_lines_rejected(self):
        with pytest.raises(QRLabError) as e:
            build_template([1.0, 1.0], angles=[math.pi])
        assert e.value.code == "degenerate-wall"

    def test_orientation_must_be_unit(self):
        with pytest.raises(ValueError):
            build_template([1.0], orientations=[2])

    def test_standardization_compresses_thin_strips(self):
        t = standard_template_from_itinerary([0.25, 3.0])
        assert t.widths[0] == 1.0
        assert t.widths[1] == 3.0
        assert t.true_widths[0] == 0.25

    def test_json_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(5)
        t = random_template(rng, 4, right_angled=False)
        t2 = template_from_json(t.to_json())
        assert np.array_equal(t.widths, t2.widths)
        assert np.array_equal(t.offsets, t2.offsets)
        assert np.array_equal(t.orientations, t2.orientations)
        assert np.array_equal(t.angles, t2.angles)


class TestExactDistances:
    def test_same_wall_is_euclidean(self, plain):
        x = plain.wall_point(1, 0.0, 0.0)
        y = plain.wall_point(1, 3.0, 4.0)
        assert plain.distance(x, y) == pytest.approx(5.0, abs=1e-9)

    def test_adjacent_wall_through_perpendicular_strip(self):
        # zero shear, aligned heights: the geodesic is straight across
        t = build_template([2.0])
        x = t.wall_point(0, 0.0, 0.0)
        y = t.wall_point(1, 0.0, 0.0)
        assert t.distance(x, y) == pytest.approx(2.0, abs=1e-9)

    def test_offset_shifts_entry(self):
        t = build_template([2.0], offsets=[3.0])
        x = t.zeta_point(0.0)
        y = t.wall_point(1, 0.0, 3.0)
        # the gluing identifies zeta(0) with strip corner; crossing the strip
        # perpendicular lands at v = offset in wall 1
        assert t.distance(x, y) == pytest.approx(2.0, abs=1e-9)

    def test_symmetry_and_identity(self, plain):
        x = plain.wall_point(0, 2.0, 1.0)
        y = plain.wall_point(3, 1.0, -2.0)
        assert plain.distance(x, y) == pytest.approx(plain.distance(y, x), rel=1e-12)
        assert plain.distance(x, x) == pytest.approx(0.0, abs=1e-12)

    @given(st.integers(0, 1_000_000))
    @settings(max_examples=25, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        t = build_template([1.0, 2.0])
        pts = [
            t.wall_point(int(rng.integers(0, t.n_walls)), *rng.uniform(-5, 5, size=2))
            for _ in range(3)
        ]
        d01 = t.distance(pts[0], pts[1])
        d12 = t.distance(pts[1], pts[2])
        d02 = t.distance(pts[0], pts[2])
        assert d02 <= d01 + d12 + 1e-9

    def test_distance_many_matches_scalar(self, plain):
        rng = np.random.default_rng(2)
        xs = [plain.wall_point(int(rng.integers(0, 4)), *rng.uniform(-4, 4, 2)) for _ in range(6)]
        ys = [plain.wall_point(int(rng.integers(0, 4)), *rng.uniform(-4, 4, 2)) for _ in range(6)]
        batch = plain.distance_many(xs, ys)
        single = [plain.distance(x, y) for x, y in zip(xs, ys)]
        assert batch == pytest.approx(single, rel=1e-12)


class TestMeshOracle:
    def test_oracle_upper_bounds_and_approaches_solver(self):
        # convergence need not be monotone pair by pair (the coarse grid can
        # luckily align with the true crossing), so assert the two sound
        # properties: never below the exact value, and within 1% at both h
        rng = np.random.default_rng(31)
        t = random_template(rng, 3)
        x = t.wall_point(0, 1.0, 2.0)
        y = t.wall_point(3, -1.0, 1.5)
        exact = t.distance(x, y)
        coarse = mesh_oracle_distance(t, x, y, h=0.08)
        fine = mesh_oracle_distance(t, x, y, h=0.04)
        assert coarse >= exact - 1e-9
        assert fine >= exact - 1e-9
        assert abs(coarse - exact) / exact < 0.01
        assert abs(fine - exact) / exact < 0.01

    def test_oracle_rejects_bad_margin(self):
        t = build_template([1.0])
        x, y = t.wall_point(0, 0.0, 0.0), t.wall_point(1, 0.0, 0.0)
        with pytest.raises(QRLabError) as e:
            mesh_oracle_distance(t, x, y, h=0.1, margin=-1.0)
        assert e.value.code == "oracle-box"

    def test_cross_validation_small_sample(self):
        # a desk-size version of the engine cross-check: 8 random pairs,
        # n <= 4 strips, 1% relative agreement at h = 0.02
        rng = np.random.default_rng(77)
        for _ in range(4):
            t = random_template(rng, int(rng.integers(2, 5)))
            for _ in range(2):
                wa, wb = rng.integers(0, t.n_walls, size=2)
                x = t.wall_point(int(wa), *rng.uniform(-3, 3, size=2))
                y = t.wall_point(int(wb), *rng.uniform(-3, 3, size=2))
                exact = t.distance(x, y)
                if exact < 0.5:
                    continue
                approx = mesh_oracle_distance(t, x, y, h=0.02)
                assert abs(approx - exact) / exact <= 0.01


class TestPChain:
    def test_gaps_match_strip_diagonals(self):
        t = build_template([1.0, 2.0], offsets=[3.0, 0.0])
        stats = p_chain_stats(t)
        assert stats.w[0] == pytest.approx(math.hypot(1.0, 3.0))
        assert stats.w[1] == pytest.approx(2.0)

    def test_chain_constant_at_least_one(self):
        rng = np.random.default_rng(9)
        t = random_template(rng, 5)
        stats = p_chain_stats(t, rho0=0.1)
        assert stats.mu_hat >= 1.0
        assert stats.least_C > 0
        # least_C is tight: some strip attains it
        idx = np.arange(t.n_strips)
        assert np.isclose(np.max(stats.w / (1 + 0.1) ** idx), stats.least_C)
