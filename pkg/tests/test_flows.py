"""Geodesic, restricted, groupoid and reduced dynamics."""

import numpy as np
import pytest

from folix import MetricCoeffs, Slope, TrigPoly, build_geometry, is_bundle_like
from folix.errors import NotBundleLike, ZeroCovector, ZeroMomentum
from folix.flows import (ReducedProfile, full_geodesic_step, full_geodesic_trajectory,
                         groupoid_flow, groupoid_range, groupoid_source,
                         initial_conditions_from_csv, reduced_flow, restricted_flow,
                         restricted_hamiltonian, trajectory_to_csv)

from conftest import random_positive_metric


class TestFullFlow:
    def test_flat_straight_line(self, flat_metric):
        traj = full_geodesic_trajectory(flat_metric, (0, 0, 0, 1), 1.0, 1e-2)
        assert np.allclose(traj.final, [0, 1, 0, 1], atol=1e-12)

    def test_position_homogeneity(self, sin_metric):
        """Rescaling the momentum leaves the unit-speed position track unchanged."""
        t1 = full_geodesic_trajectory(sin_metric, (0.1, 0.2, 0.3, 1.0), 1.0, 1e-3)
        t2 = full_geodesic_trajectory(sin_metric, (0.1, 0.2, 0.3 * 7, 7.0), 1.0, 1e-3)
        assert np.max(np.abs(t1.states[:, :2] - t2.states[:, :2])) < 1e-12

    def test_energy_drift(self):
        rng = np.random.default_rng(2)
        m = random_positive_metric(rng)
        traj = full_geodesic_trajectory(m, (0.1, 0.7, 0.4, -0.8), 10.0, 1e-3)
        drift = np.abs(traj.hamiltonian - traj.hamiltonian[0]) / traj.hamiltonian[0]
        assert np.max(drift) < 1e-8

    def test_zero_covector_rejected(self, flat_metric):
        with pytest.raises(ZeroCovector):
            full_geodesic_step(flat_metric, (0.0, 0.0, 0.0, 0.0), 1e-3)


class TestRestrictedFlow:
    def test_flat_unit_speed(self, flat_geometry, flat_certificate):
        traj = restricted_flow(flat_geometry, (0, 0, 1), 0.8, 1e-3,
                               certificate=flat_certificate)
        assert np.allclose(traj.final, [0.0, 0.8, 1.0], atol=1e-12)

    def test_flat_sign_reverses(self, flat_geometry, flat_certificate):
        traj = restricted_flow(flat_geometry, (0, 0, -1), 0.8, 1e-3,
                               certificate=flat_certificate)
        assert np.allclose(traj.final, [0.0, -0.8, -1.0], atol=1e-12)

    def test_cross_check_with_full_flow(self, sin_metric, sin_geometry, sin_certificate):
        """Projection of the full 4D flow started on the conormal bundle."""
        th = float(sin_metric.theta)
        full = full_geodesic_trajectory(sin_metric, (0.1, 0.2, -th * 1.0, 1.0), 2.0, 1e-3)
        rest = restricted_flow(sin_geometry, (0.1, 0.2, 1.0), 2.0, 1e-3,
                               certificate=sin_certificate)
        assert np.max(np.abs(full.states[:, [0, 1, 3]] - rest.states)) < 1e-6

    def test_certificate_required(self, sin_geometry):
        with pytest.raises(NotBundleLike):
            restricted_flow(sin_geometry, (0, 0, 1), 0.1, 1e-3)

    def test_zero_momentum_rejected(self, sin_geometry, sin_certificate):
        with pytest.raises(ZeroMomentum):
            restricted_flow(sin_geometry, (0, 0, 0), 0.1, 1e-3,
                            certificate=sin_certificate)

    def test_conservation(self, leafwise_geometry, leafwise_certificate):
        traj = restricted_flow(leafwise_geometry, (0.1, 0.35, 0.7), 10.0, 1e-3,
                               certificate=leafwise_certificate)
        drift = np.abs(traj.hamiltonian - traj.hamiltonian[0]) / traj.hamiltonian[0]
        assert np.max(drift) < 1e-8

    def test_rk4_order(self, leafwise_geometry, leafwise_certificate):
        state = (0.05, 0.42, 1.3)
        ref = restricted_flow(leafwise_geometry, state, 1.0, 1.25e-4,
                              certificate=leafwise_certificate).final
        e1 = np.linalg.norm(restricted_flow(leafwise_geometry, state, 1.0, 2e-3,
                                            certificate=leafwise_certificate).final - ref)
        e2 = np.linalg.norm(restricted_flow(leafwise_geometry, state, 1.0, 1e-3,
                                            certificate=leafwise_certificate).final - ref)
        assert e1 / e2 >= 14.0, f"halving gain {e1 / e2:.1f}"

    def test_leaf_to_leaf(self, leafwise_geometry, leafwise_certificate):
        """Two starts on one leaf stay on a common leaf: same (y mod 1, p_v)."""
        th = float(leafwise_geometry.theta)
        tau0 = 0.37
        a = restricted_flow(leafwise_geometry, (0.1, 0.25, 0.8), 1.0, 1e-3,
                            certificate=leafwise_certificate).final
        b = restricted_flow(leafwise_geometry, (0.1 + tau0, 0.25 + th * tau0, 0.8),
                            1.0, 1e-3, certificate=leafwise_certificate).final
        ya = (a[1] - th * a[0]) % 1.0
        yb = (b[1] - th * b[0]) % 1.0
        assert min(abs(ya - yb), 1 - abs(ya - yb)) < 1e-7
        assert abs(a[2] - b[2]) < 1e-7


class TestConormalInvariance:
    def test_full_flow_preserves_conormal(self, leafwise_metric):
        th = float(leafwise_metric.theta)
        pv = 1.1
        traj = full_geodesic_trajectory(leafwise_metric, (0.2, 0.6, -th * pv, pv),
                                        10.0, 1e-3)
        assert np.max(np.abs(traj.states[:, 2] + th * traj.states[:, 3])) < 1e-8


class TestLeafwiseConstancy:
    def test_flow_consistent_sign(self, leafwise_geometry):
        """X(v - theta u) = +sign(p_v)/a_H: the directional derivative of the
        transverse coordinate along the restricted generator."""
        rng = np.random.default_rng(4)
        th = float(leafwise_geometry.theta)
        u, v = rng.uniform(size=(2, 50))
        cu, cv, _ = leafwise_geometry.flow_coefficients(u, v)
        for s in (1.0, -1.0):
            X_y = cv * s - th * (-cu * s)
            assert np.max(np.abs(X_y - s / leafwise_geometry.a_H_at(u, v))) < 1e-10


class TestGroupoidFlow:
    def test_flat_tau_frozen(self, flat_geometry, flat_certificate):
        end = groupoid_flow(flat_geometry, (0, 0, 1, 0.3), 0.7, 1e-3,
                            certificate=flat_certificate)
        assert np.allclose(end, [0.0, 0.7, 1.0, 0.3], atol=1e-12)

    def test_t_zero_identity(self, leafwise_geometry, leafwise_certificate):
        pt = (0.1, 0.2, 0.9, 0.4)
        end = groupoid_flow(leafwise_geometry, pt, 0.0, 1e-3,
                            certificate=leafwise_certificate)
        assert np.allclose(end, pt)

    def test_intertwining(self, leafwise_geometry, leafwise_certificate):
        """Source and range of the flowed point follow the base flow."""
        geom, cert = leafwise_geometry, leafwise_certificate
        th = float(geom.theta)
        pt = np.array([0.15, 0.62, 1.2, 0.45])
        end = groupoid_flow(geom, pt, 1.0, 1e-3, certificate=cert)
        r_t = restricted_flow(geom, groupoid_range(pt), 1.0, 1e-3, certificate=cert).final
        s_t = restricted_flow(geom, groupoid_source(pt, th), 1.0, 1e-3,
                              certificate=cert).final
        assert np.max(np.abs(groupoid_range(end) - r_t)) < 1e-7
        assert np.max(np.abs(groupoid_source(end, th) - s_t)) < 1e-7


class TestReducedFlow:
    def test_constant_profile_translation(self):
        prof = ReducedProfile.from_poly(TrigPoly.constant(1.0))
        end = reduced_flow(prof, (0.2, 1.0), 0.7, 1e-3)
        assert end.y == pytest.approx(0.9, abs=1e-12)
        assert end.eta == pytest.approx(1.0, abs=1e-14)
        end_m = reduced_flow(prof, (0.2, -1.0), 0.7, 1e-3)
        assert end_m.y == pytest.approx(-0.5, abs=1e-12)

    def test_conservation(self):
        prof = ReducedProfile.from_poly(TrigPoly.from_terms({(0, 0): 1.0, (1, 0): 0.15}))
        traj = reduced_flow(prof, (0.0, 1.0), 5.0, 1e-3, return_trajectory=True)
        drift = np.abs(traj.hamiltonian - traj.hamiltonian[0]) / traj.hamiltonian[0]
        assert np.max(drift) < 1e-8

    def test_sign_preserved(self):
        prof = ReducedProfile.from_poly(TrigPoly.from_terms({(0, 0): 1.0, (1, 0): 0.15}))
        for eta0 in (0.3, -0.3):
            traj = reduced_flow(prof, (0.1, eta0), 5.0, 1e-3, return_trajectory=True)
            assert np.all(np.sign(traj.states[:, 1]) == np.sign(eta0))

    def test_zero_eta_rejected(self):
        prof = ReducedProfile.from_poly(TrigPoly.constant(1.0))
        with pytest.raises(ZeroMomentum):
            reduced_flow(prof, (0.0, 0.0), 1.0, 1e-3)

    def test_profile_from_geometry_matches_restricted(self, leafwise_geometry,
                                                      leafwise_certificate):
        """For theta = p/q the reduced y-coordinate is q(v - theta u) mod 1; the
        physical transverse speed in that rescaled chart carries the factor q."""
        geom, cert = leafwise_geometry, leafwise_certificate
        th = float(geom.theta)
        q = geom.theta.q
        prof = ReducedProfile.from_geometry(geom)
        state = (0.0, 0.3, 1.0)
        t = 0.8
        rest = restricted_flow(geom, state, t * q, 1e-3, certificate=cert).final
        y_phys = (rest[1] - th * rest[0]) % (1.0 / q)
        red = reduced_flow(prof, ((0.3 % (1.0 / q)) * q, 1.0), t, 1e-3,
                           return_trajectory=True)
        # same reduced Hamiltonian level set; conserved along both flows
        h_rest = restricted_hamiltonian(geom, rest)
        h_red = red.hamiltonian[-1]
        assert h_rest == pytest.approx(h_red, rel=1e-7)


class TestTrajectoryCsv:
    def test_round_trip(self, flat_geometry, flat_certificate):
        traj = restricted_flow(flat_geometry, (0.1, 0.2, 1.5), 0.1, 1e-2,
                               certificate=flat_certificate)
        text = trajectory_to_csv(traj, "restricted")
        assert text.splitlines()[0] == "t,u,v,p_v,hamiltonian"
        states = initial_conditions_from_csv(text)
        assert np.allclose(states[0], [0.1, 0.2, 1.5])
