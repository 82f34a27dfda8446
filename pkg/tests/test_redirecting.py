"""Ray models, redirecting witnesses, certificates, and classification."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrlab import (
    Budget,
    ExcursionProfile,
    QGConstants,
    QRLabError,
    build_template,
    crossing_ray,
    default_rho0,
    excursion_classify,
    flat_ray,
    limit_ray,
    main_flat_ray,
    nonredirect_certificate,
    poset_build,
    preorder_estimate,
    product_jump_segment,
    qg_fit,
    redirect_at_radius,
    type_and_itinerary,
)


@pytest.fixture(scope="module")
def t12():
    return build_template([1.0] * 12)


@pytest.fixture(scope="module")
def cubic(t12):
    profile = ExcursionProfile.from_function(lambda i: float(i**3), 12)
    return crossing_ray(t12, profile, name="cubic")


@pytest.fixture(scope="module")
def zeta(t12):
    return main_flat_ray(t12, name="zeta")


class TestRayModels:
    def test_crossing_ray_first_hits_are_exact(self, t12, cubic):
        # the staircase is parametrized by arclength, so the recorded entry
        # vertex of wall i+1 must sit at time t_{i+1} exactly
        entry = cubic.meta["entry_indices"]
        for i, vi in enumerate(entry):
            assert cubic.prefix.times[vi] == pytest.approx(
                cubic.profile.times[i], rel=1e-9
            )

    def test_crossing_ray_rejects_too_fast_profile(self, t12):
        with pytest.raises(QRLabError) as e:
            # second step of length 1 cannot cross a unit strip and climb
            crossing_ray(t12, ExcursionProfile((8.0, 9.0)))
        assert e.value.code == "bad-profile"

    def test_flat_ray_lives_in_its_wall(self, t12):
        r = flat_ray(t12, wall=3, name="f3")
        assert r.is_flat
        assert r.prefix.end.chart == t12.wall_chart(3)

    def test_main_flat_is_zeta(self, zeta):
        assert zeta.is_main_flat()

    def test_profile_requires_increasing_times(self):
        with pytest.raises(QRLabError):
            ExcursionProfile((3.0, 2.0))


class TestWitness:
    def test_identity_witness_for_same_ray(self, zeta):
        w = redirect_at_radius(zeta, zeta, 10.0, "backward_spiral")
        assert w is not None
        assert w.constants.q == pytest.approx(1.0)

    def test_witness_agrees_with_source_inside_ball(self, t12, cubic, zeta):
        r = 10.0
        w = redirect_at_radius(cubic, zeta, r, strategy="backward_spiral")
        assert w is not None
        # the witness follows alpha on [0, prefix_time] vertex for vertex;
        # distances are measured in the witness's own ambient template
        # (the construction may shear-extend the base template)
        ambient = w.path.template
        for tv in np.linspace(0.0, w.prefix_time, 12):
            d = ambient.distance(w.path.point_at(tv), cubic.prefix.point_at(tv))
            assert d <= 1e-7
        assert w.prefix_time >= r / 3.0  # leaves well outside the core

    def test_witness_lands_and_follows_target(self, t12, cubic, zeta):
        w = redirect_at_radius(cubic, zeta, 10.0, strategy="backward_spiral")
        ambient = w.path.template
        land = w.path.point_at(w.landing_time)
        on_zeta = ambient.zeta_point(w.target_time)
        assert ambient.distance(land, on_zeta) <= 1e-6

    def test_witness_constants_are_honest(self, t12, cubic, zeta):
        w = redirect_at_radius(cubic, zeta, 10.0, strategy="backward_spiral")
        ambient = w.path.template
        refit = qg_fit(
            w.path, w.constants.Q, ambient.distance, max(w.path.length / 512, 0.25)
        )
        assert refit.q <= w.constants.q * (1.0 + 1e-6)

    def test_unknown_strategy_rejected(self, cubic, zeta):
        with pytest.raises(ValueError):
            redirect_at_radius(cubic, zeta, 10.0, strategy="teleport")

    def test_different_itineraries_cannot_be_bridged(self, t12):
        p = ExcursionProfile.from_function(lambda i: float(i**3), 6)
        a = crossing_ray(t12, p, name="a")
        b = crossing_ray(
            t12,
            ExcursionProfile.from_function(lambda i: 1.2 * i**3, 6),
            itinerary=tuple(["w0"] + [f"v{i}" for i in range(1, 7)]),
            name="b",
        )
        rep = preorder_estimate(a, b, radii=(5.0, 10.0))
        assert rep.verdict == "no-witness-found"
        assert all(row.strategy is None for row in rep.rows)


class TestVerdicts:
    def test_cubic_to_zeta_uniform_at_small_radii(self, cubic, zeta):
        rep = preorder_estimate(cubic, zeta, radii=(5.0, 10.0, 20.0))
        assert rep.verdict == "witnessed-with-uniform-constants"
        assert rep.cell is not None
        assert all(row.landed for row in rep.rows)

    def test_rows_record_radius_order(self, cubic, zeta):
        rep = preorder_estimate(cubic, zeta, radii=(5.0, 10.0))
        assert [row.radius for row in rep.rows] == [5.0, 10.0]

    def test_radii_must_increase(self, cubic, zeta):
        with pytest.raises(ValueError):
            preorder_estimate(cubic, zeta, radii=(10.0, 10.0))

    def test_budget_covers_and_cells(self):
        b = Budget()
        assert b.covers(QGConstants(64.0, 16.0))
        assert not b.covers(QGConstants(65.0, 0.0))
        cells = b.cells_covering([QGConstants(3.0, 0.5), QGConstants(2.0, 1.0)])
        assert cells[0] == (4.0, 1.0)


class TestCertificate:
    @pytest.fixture(scope="class")
    def cert(self):
        profile = ExcursionProfile.from_function(lambda i: float(i**3), 24)
        deltas = np.ones(24)
        return nonredirect_certificate(profile, deltas, 2.0, 1.0)

    def test_rho_chain_values(self, cert):
        rho0 = default_rho0(2.0, 1.0)
        assert rho0 == pytest.approx(1.0 / 16.0)
        assert cert.rho0 == pytest.approx(rho0)
        assert cert.rho1 == pytest.approx(rho0**2 / 2.0)
        assert cert.rho == pytest.approx(rho0**2 / 4.0)
        assert cert.C == pytest.approx(1.0)
        assert cert.r_star == pytest.approx(2.0 / (cert.rho * cert.rho0))

    def test_soundness_recheck(self, cert):
        assert cert.check_soundness()

    def test_divergence_reported_per_radius(self, cert):
        for r, k in cert.divergence.items():
            rows = cert.rows[r]
            assert rows[k].t_lower > 2.0 * rows[k].actual_time

    def test_doubling_radius_scales_rows_linearly(self, cert):
        # every stored lower bound is homogeneous of degree 1 in r
        (r1, rows1), (r2, rows2) = sorted(cert.rows.items())
        scale = r2 / r1
        for a, b in zip(rows1, rows2):
            assert b.t_lower == pytest.approx(scale * a.t_lower, rel=1e-12)
            assert b.ell_lower == pytest.approx(scale * a.ell_lower, rel=1e-12)

    def test_exponential_profile_rejected(self):
        profile = ExcursionProfile.from_function(lambda i: 2.0**i, 20)
        with pytest.raises(QRLabError) as e:
            nonredirect_certificate(profile, np.ones(20), 2.0, 1.0)
        assert e.value.code == "profile-inconsistent"

    def test_radius_below_r_star_rejected(self, cert):
        profile = ExcursionProfile.from_function(lambda i: float(i**3), 24)
        with pytest.raises(ValueError):
            nonredirect_certificate(
                profile, np.ones(24), 2.0, 1.0, radii=(cert.r_star / 2.0,)
            )


class TestExcursion:
    def test_quadratic_is_subexponential(self):
        p = ExcursionProfile.from_function(lambda i: float(i**2), 40)
        rep = excursion_classify(p)
        assert rep.verdict == "subexponential-consistent"
        assert rep.fitted_limit < 0.25

    def test_power_of_three_limit_is_log3(self):
        p = ExcursionProfile.from_function(lambda i: 3.0**i, 30)
        rep = excursion_classify(p)
        assert rep.verdict == "not-subexponential"
        assert rep.fitted_limit == pytest.approx(math.log(3.0), rel=1e-6)

    def test_quasi_polynomial_is_subexponential(self):
        p = ExcursionProfile.from_function(lambda i: float(i) ** math.log(i + 1), 50)
        rep = excursion_classify(p)
        assert rep.verdict == "subexponential-consistent"

    @given(st.floats(1.1, 3.0), st.integers(20, 40))
    @settings(max_examples=15, deadline=None)
    def test_pure_exponentials_fit_their_rate(self, base, horizon):
        p = ExcursionProfile.from_function(lambda i: base**i, horizon)
        rep = excursion_classify(p)
        assert rep.fitted_limit == pytest.approx(math.log(base), rel=0.05)


class TestTypeAndItinerary:
    def test_zeta_is_type_I(self, zeta):
        rep = type_and_itinerary(zeta)
        assert rep.kind == "I"
        assert rep.u_times[-1] == math.inf

    def test_crossing_ray_is_type_II_with_walls(self, cubic):
        rep = type_and_itinerary(cubic)
        assert rep.kind == "II"
        assert rep.itinerary == tuple(f"w{i}" for i in range(13))
        assert all(math.isfinite(u) for u in rep.u_times)

    def test_flat_ray_is_type_I(self, t12):
        rep = type_and_itinerary(flat_ray(t12, wall=3, name="f3"))
        assert rep.kind == "I"
        assert rep.itinerary is None


class TestLimitRay:
    def test_checkpoint_gaps_shrink(self, t12, cubic, zeta):
        rep = limit_ray(cubic, radii=(5.0, 10.0, 20.0))
        assert rep.contract.q <= 3.0 * max(w.constants.q for w in rep.paths if w)
        gaps = rep.checkpoint_gaps
        assert gaps[-1] <= gaps[0] + 1e-9


class TestJumpSegment:
    def test_contract_on_spread_quadruple(self, t12):
        # [x, y] . [y, far point]: when d(z, w) > 8 d(x, y) one endpoint is
        # far from x and the concatenation keeps the pinned contract
        x = t12.zeta_point(4.0)
        y = t12.wall_point(0, 0.0, 6.0)
        z = t12.wall_point(0, 0.0, 5.0)
        w = t12.wall_point(6, 0.0, 40.0)
        seg, constants, landing = product_jump_segment(t12, x, y, z, w)
        assert t12.distance(landing, x) > 4.0 * t12.distance(x, y)
        fit = qg_fit(seg, constants.Q, t12.distance, max(seg.length / 256, 0.25))
        assert fit.q <= constants.q * (1.0 + 1e-9)

    def test_rejects_tight_quadruple(self, t12):
        x = t12.zeta_point(0.0)
        y = t12.zeta_point(4.0)
        z = t12.zeta_point(5.0)
        w = t12.zeta_point(6.0)
        with pytest.raises(QRLabError) as e:
            product_jump_segment(t12, x, y, z, w)
        assert e.value.code == "strategy-unavailable"
