"""Metric evaluation, derived transverse fields, bundle-like classification."""

import numpy as np
import pytest

from folix import (MetricCoeffs, Slope, TrigPoly, build_geometry, eval_metric,
                   is_bundle_like, mean_curvature, metric_from_json,
                   metric_to_json, geometry_report, transverse_derivatives)
from folix.errors import GridMismatch, NonPositiveMetric
from folix.geometry import weighted_inner

from conftest import random_positive_metric


class TestEvalMetric:
    def test_flat_constant(self, flat_metric):
        assert eval_metric(flat_metric, (0.37, 0.91)) == (1.0, 0.0, 1.0)

    def test_sin_vanishes_at_zero(self, sin_metric):
        a, b, c = eval_metric(sin_metric, (0.3, 0.0))
        assert abs(a - 1.0) < 1e-14 and b == 0.0 and c == 1.0

    def test_sin_quarter_period(self, sin_metric):
        a, _, _ = eval_metric(sin_metric, (0.0, 0.25))
        assert abs(a - 1.5) < 1e-14

    def test_periodicity(self, sin_metric):
        p0 = eval_metric(sin_metric, (0.2, 0.6))
        for shift in [(1, 0), (0, 1), (3, -2)]:
            p1 = eval_metric(sin_metric, (0.2 + shift[0], 0.6 + shift[1]))
            assert p1 == pytest.approx(p0, abs=1e-12)


class TestBuildGeometry:
    def test_flat_identity_frames(self, flat_geometry):
        assert np.allclose(flat_geometry.a_H, 1.0)
        assert np.allclose(flat_geometry.e_F[..., 0], 1.0)
        assert np.allclose(flat_geometry.e_F[..., 1], 0.0)
        assert np.allclose(flat_geometry.e_H[..., 0], 0.0)
        assert np.allclose(flat_geometry.e_H[..., 1], 1.0)

    def test_constant_metric_a_H(self):
        m = MetricCoeffs(a=TrigPoly.constant(2.0), b=TrigPoly.constant(0.0),
                         c=TrigPoly.constant(3.0), theta=Slope.rational(1, 1))
        geom = build_geometry(m, (8, 8))
        # a_H^2 = (ac - b^2)/(a + 2b theta + c theta^2) = 6/5
        assert np.allclose(geom.a_H ** 2, 1.2, rtol=1e-13)

    def test_flat_diagonal_slope_frames(self):
        m = MetricCoeffs.flat(Slope.rational(1, 1))
        geom = build_geometry(m, (8, 8))
        r = 1.0 / np.sqrt(2.0)
        assert np.allclose(geom.e_F, [r, r])
        assert np.allclose(geom.e_H, [-r, r])

    def test_consistency_a_H(self, sin_metric):
        geom = build_geometry(sin_metric, (32, 32))
        res = geom.a_H ** 2 * geom.det_gF - geom.det_g
        assert np.max(np.abs(res / geom.det_g)) < 1e-12

    def test_nonpositive_reports_node(self):
        m = MetricCoeffs(a=TrigPoly.from_terms({(0, 0): 1.0, (0, 1): -0.6j}),
                         b=TrigPoly.constant(0.0), c=TrigPoly.constant(1.0),
                         theta=Slope.rational(0, 1))
        with pytest.raises(NonPositiveMetric) as exc:
            build_geometry(m, (16, 16))
        assert exc.value.node is not None

    def test_metric_reconstruction(self):
        """g_F + g_H reproduces (a, b, c) at random points."""
        rng = np.random.default_rng(7)
        for _ in range(5):
            m = random_positive_metric(rng)
            th = float(m.theta)
            geom = build_geometry(m, (16, 16))
            pts = rng.uniform(size=(20, 2))
            u, v = pts[:, 0], pts[:, 1]
            a, b, c = m.a(u, v), m.b(u, v), m.c(u, v)
            q = geom.q_poly(u, v)
            p = geom.p_poly(u, v)
            al = geom.ab_theta(u, v)   # a + b theta
            be = geom.bc_theta(u, v)   # b + c theta
            gF = np.stack([al ** 2, al * be, be ** 2]) / q
            gH = (p / q) * np.stack([th ** 2 * np.ones_like(q), -th * np.ones_like(q),
                                     np.ones_like(q)])
            for got, want in zip(gF + gH, (a, b, c)):
                assert np.max(np.abs(got - want)) < 1e-10


class TestFrames:
    def test_orthonormality_random_metrics(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(5):
            m = random_positive_metric(rng)
            geom = build_geometry(m, (16, 16))
            pts = rng.uniform(size=(20, 2))
            u, v = pts[:, 0], pts[:, 1]
            a, b, c = m.a(u, v), m.b(u, v), m.c(u, v)
            q = geom.q_poly(u, v)
            p = geom.p_poly(u, v)
            th = float(m.theta)

            def g_of(x, y):
                return a * x[0] * y[0] + b * (x[0] * y[1] + x[1] * y[0]) + c * x[1] * y[1]

            sq = np.sqrt(q)
            eF = (1.0 / sq, th / sq)
            eH = (-geom.bc_theta(u, v) / (sq * np.sqrt(p)),
                  geom.ab_theta(u, v) / (sq * np.sqrt(p)))
            worst = max(worst,
                        np.max(np.abs(g_of(eF, eF) - 1.0)),
                        np.max(np.abs(g_of(eH, eH) - 1.0)),
                        np.max(np.abs(g_of(eF, eH))))
        assert worst < 1e-10, f"frame orthonormality violated: {worst:.2e}"


class TestBundleLike:
    def test_flat_any_slope(self):
        for theta in [Slope.rational(0, 1), Slope.rational(2, 3), Slope.real(np.sqrt(2))]:
            chk = is_bundle_like(MetricCoeffs.flat(theta), 1e-12)
            assert chk.flag and chk.max_violation <= 1e-12

    def test_c_of_u_irrational_fails(self):
        m = MetricCoeffs(a=TrigPoly.constant(1.0), b=TrigPoly.constant(0.0),
                         c=TrigPoly.from_terms({(0, 0): 1.0, (1, 0): -0.25j}),
                         theta=Slope.real(np.sqrt(2.0)))
        chk = is_bundle_like(m, 1e-10)
        assert not chk.flag
        assert chk.max_violation > 0.1
        assert chk.a_H_constant is False

    def test_leafwise_constant_c_passes(self, leafwise_metric):
        chk = is_bundle_like(leafwise_metric, 1e-10)
        assert chk.flag and chk.max_violation <= 1e-10

    def test_irrational_constancy_report(self):
        chk = is_bundle_like(MetricCoeffs.flat(Slope.real(np.pi / 3)), 1e-10)
        assert chk.a_H_constant is True


class TestMeanCurvature:
    def test_flat_is_zero(self, flat_metric):
        assert mean_curvature(flat_metric, (0.3, 0.8)) == pytest.approx(0.0, abs=1e-14)

    def test_sin_metric_values(self, sin_metric):
        # F = -a'/(2a): at v=0, a=1, a' = pi -> -pi/2; at v=1/4, a'=0 -> 0
        assert mean_curvature(sin_metric, (0.0, 0.0)) == pytest.approx(-np.pi / 2, abs=1e-12)
        assert mean_curvature(sin_metric, (0.0, 0.25)) == pytest.approx(0.0, abs=1e-12)

    def test_against_central_differences(self):
        """e:mean-style bracket evaluated by finite differences of exact fields."""
        rng = np.random.default_rng(11)
        h = 1e-5
        for _ in range(3):
            m = random_positive_metric(rng)
            geom = build_geometry(m, (16, 16))

            def bracket_u(u, v):
                return geom.bc_theta(u, v) / np.sqrt(geom.q_poly(u, v))

            def bracket_v(u, v):
                return geom.ab_theta(u, v) / np.sqrt(geom.q_poly(u, v))

            pts = rng.uniform(size=(10, 2))
            u, v = pts[:, 0], pts[:, 1]
            fd = ((bracket_u(u + h, v) - bracket_u(u - h, v)) / (2 * h)
                  - (bracket_v(u, v + h) - bracket_v(u, v - h)) / (2 * h))
            fd /= np.sqrt(geom.p_poly(u, v))
            exact = geom.mean_curvature(u, v)
            assert np.max(np.abs(fd - exact)) < 1e-6


class TestTransverseDerivatives:
    def test_flat_e_H_is_dv(self, flat_geometry):
        uu, vv = flat_geometry.mesh(16, 16)
        f = np.sin(2 * np.pi * vv)
        eHf, _ = transverse_derivatives(flat_geometry, f)
        assert np.max(np.abs(eHf - 2 * np.pi * np.cos(2 * np.pi * vv))) < 1e-10

    def test_constant_field(self, sin_geometry):
        f = np.full((16, 16), 2.5)
        eHf, eHsf = transverse_derivatives(sin_geometry, f)
        assert np.max(np.abs(eHf)) < 1e-12
        assert np.max(np.abs(eHsf - sin_geometry.F * 2.5)) < 1e-12

    def test_grid_mismatch(self, sin_geometry):
        with pytest.raises(GridMismatch):
            transverse_derivatives(sin_geometry, np.zeros((8, 8)))

    @pytest.mark.parametrize("grid", [(32, 32)])
    def test_adjointness(self, grid):
        """<e_H f, h> = <f, (-e_H + F) h> for band-limited fields, exact quadrature."""
        rng = np.random.default_rng(5)
        m = random_positive_metric(rng)
        geom = build_geometry(m, grid)
        uu, vv = geom.mesh(*grid)
        worst = 0.0
        for _ in range(4):
            def bandlimited():
                f = np.zeros(grid)
                for _ in range(6):
                    mm, nn = rng.integers(-4, 5, size=2)
                    ph = rng.uniform(0, 2 * np.pi)
                    f += rng.normal() * np.cos(2 * np.pi * (mm * uu + nn * vv) + ph)
                return f

            f, h = bandlimited(), bandlimited()
            eHf, _ = transverse_derivatives(geom, f)
            _, eHsh = transverse_derivatives(geom, h)
            lhs = weighted_inner(geom, eHf, h)
            rhs = weighted_inner(geom, f, eHsh)
            worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-10, f"adjointness residual {worst:.2e}"


class TestPeriodicityAndJson:
    def test_cached_fields_periodic(self, sin_geometry):
        g = sin_geometry
        pts = np.random.default_rng(0).uniform(size=(10, 2))
        u, v = pts[:, 0], pts[:, 1]
        for fn in (g.a_H_at, g.mean_curvature, g.q_poly, g.p_poly):
            assert np.array_equal(fn(u, v), fn(u + 1, v)) or \
                np.max(np.abs(fn(u, v) - fn(u + 1, v))) < 1e-13
            assert np.max(np.abs(fn(u, v) - fn(u, v + 1))) < 1e-13

    def test_json_round_trip(self, sin_metric):
        obj = metric_to_json(sin_metric)
        m2 = metric_from_json(obj)
        pts = np.random.default_rng(1).uniform(size=(5, 2))
        for p in pts:
            assert eval_metric(sin_metric, p) == pytest.approx(eval_metric(m2, p))

    def test_report_fields(self, sin_metric):
        rep = geometry_report(sin_metric, grid=(32, 32), tol=1e-10)
        assert rep["bundle_like"] is True
        assert rep["a_H_min"] == pytest.approx(1.0, abs=1e-12)
        # extrema of F = -pi cos(2 pi v)/(2 + sin(2 pi v)) sit at sin = -1/2
        assert rep["F_min"] == pytest.approx(-np.pi / np.sqrt(3.0), abs=2e-2)
        assert rep["F_max"] == pytest.approx(np.pi / np.sqrt(3.0), abs=2e-2)
