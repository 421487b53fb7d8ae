"""Geodesic dynamics on the cotangent side of the foliated torus.

Four flows, all integrated with classical fixed-step RK4:

* the full unit-speed geodesic flow on T*T^2 (Hamiltonian sqrt(G));
* its restriction to the conormal bundle of the foliation, coordinates
  (u, v, p_v), defined when the metric is bundle-like;
* the lift of the restricted flow to the leafwise-displacement groupoid,
  coordinates (u, v, p_v, tau);
* the reduced flow on the cylinder (y, eta) for closed-leaf slopes.

sign(p_v) is a constant of motion for the restricted flow (dp_v/dt is
proportional to |p_v|), so it is frozen per trajectory; initial data with
p_v = 0 is rejected.  Conservation is monitored, not enforced: the
integrator is deliberately plain RK4.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import NotBundleLike, ZeroCovector, ZeroMomentum
from .geometry import BundleCheck


class Trajectory(NamedTuple):
    times: np.ndarray           # (n_samples,)
    states: np.ndarray          # (n_samples, dim)
    hamiltonian: np.ndarray     # (n_samples,)

    @property
    def final(self):
        return self.states[-1]


def _rk4_step(rhs, y, dt):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(rhs, y0, t, dt, h_fn):
    """Fixed-step RK4 from 0 to t, sampling every dt (final step may be short)."""
    if t < 0:
        raise ValueError("t must be non-negative; integrate the reversed field instead")
    n_full, rem = divmod(t, dt) if dt > 0 else (0, 0.0)
    n_full = int(round(n_full))
    steps = [dt] * n_full
    if rem > 1e-12 * max(dt, 1.0):
        steps.append(rem)
    ys = [np.array(y0, dtype=float)]
    ts = [0.0]
    y = ys[0]
    s = 0.0
    for h in steps:
        y = _rk4_step(rhs, y, h)
        s += h
        ys.append(y)
        ts.append(s)
    states = np.array(ys)
    times = np.array(ts)
    return Trajectory(times, states, np.array([h_fn(st) for st in states]))


# -- full geodesic flow on T*T^2 -------------------------------------------


class _FullFlowFields:
    """Cached coefficient polynomials for the 4D geodesic vector field."""

    def __init__(self, metric):
        self.metric = metric
        self.da = (metric.a.du(), metric.a.dv())
        self.db = (metric.b.du(), metric.b.dv())
        self.dc = (metric.c.du(), metric.c.dv())
        self.p_poly = (metric.a * metric.c - metric.b * metric.b).trimmed()
        self.dp = (self.p_poly.du(), self.p_poly.dv())

    def rhs(self, state):
        u, v, pu, pv = state
        a = self.metric.a(u, v)
        b = self.metric.b(u, v)
        c = self.metric.c(u, v)
        p = self.p_poly(u, v)
        G = (c * pu * pu - 2.0 * b * pu * pv + a * pv * pv) / p
        if G <= 0.0:
            raise ZeroCovector("metric norm of the covector vanishes")
        s = 1.0 / np.sqrt(G)
        du = s * (c * pu - b * pv) / p
        dv = s * (-b * pu + a * pv) / p
        dG = []
        for ax in (0, 1):
            da = self.da[ax](u, v)
            db = self.db[ax](u, v)
            dc = self.dc[ax](u, v)
            dp = self.dp[ax](u, v)
            dG.append((dc * pu * pu - 2.0 * db * pu * pv + da * pv * pv) / p - G * dp / p)
        return np.array([du, dv, -0.5 * s * dG[0], -0.5 * s * dG[1]])

    def hamiltonian(self, state):
        u, v, pu, pv = state
        a = self.metric.a(u, v)
        b = self.metric.b(u, v)
        c = self.metric.c(u, v)
        p = self.p_poly(u, v)
        return np.sqrt((c * pu * pu - 2.0 * b * pu * pv + a * pv * pv) / p)


def full_geodesic_step(metric, state, dt):
    """One RK4 step of the unit-speed geodesic flow on T*T^2.

    ``state`` is (u, v, p_u, p_v).  The Hamiltonian sqrt(G(p)) is conserved
    along the exact flow; RK4 drift is O(dt^4) per unit time.
    """
    fields = metric if isinstance(metric, _FullFlowFields) else _FullFlowFields(metric)
    state = np.asarray(state, dtype=float)
    fields.hamiltonian(state)  # raises ZeroCovector via rhs on first use too
    return _rk4_step(fields.rhs, state, dt)


def full_geodesic_trajectory(metric, state, t, dt):
    fields = _FullFlowFields(metric)
    state = np.asarray(state, dtype=float)
    if fields.hamiltonian(state) <= 0.0:
        raise ZeroCovector("metric norm of the covector vanishes")
    return _integrate(fields.rhs, state, t, dt, fields.hamiltonian)


# -- restricted flow on the conormal bundle --------------------------------


def _require_certificate(certificate):
    if certificate is None:
        raise NotBundleLike("restricted dynamics need a bundle-like certificate; "
                            "run geometry.is_bundle_like first")
    if isinstance(certificate, BundleCheck) and not certificate.flag:
        raise NotBundleLike(f"metric is not bundle-like (max violation "
                            f"{certificate.max_violation:.3e})")


def restricted_rhs(geometry, sign):
    """Vectorized RHS for (u, v, p_v) arrays; ``sign`` is the frozen sign of p_v."""

    def rhs(state):
        u, v, p = state[..., 0], state[..., 1], state[..., 2]
        cu, cv, cp = geometry.flow_coefficients(u, v)
        return np.stack([-cu * sign, cv * sign, cp * np.abs(p)], axis=-1)

    return rhs


def restricted_hamiltonian(geometry, state):
    """|p_v| / a_H(u, v); conserved along the restricted flow."""
    state = np.asarray(state, dtype=float)
    u, v, p = state[..., 0], state[..., 1], state[..., 2]
    return np.abs(p) / geometry.a_H_at(u, v)


def restricted_flow(geometry, state, t, dt, certificate=None):
    """Trajectory of the restricted geodesic flow from (u, v, p_v).

    The caller certifies the metric is bundle-like by passing the result of
    ``geometry.is_bundle_like``; without it the conormal bundle need not be
    invariant and the call is refused.
    """
    _require_certificate(certificate)
    state = np.asarray(state, dtype=float)
    if state[2] == 0.0:
        raise ZeroMomentum("initial p_v must be nonzero")
    sign = 1.0 if state[2] > 0 else -1.0
    rhs = restricted_rhs(geometry, sign)

    def scalar_rhs(y):
        return rhs(y[None, :])[0]

    return _integrate(scalar_rhs, state, t, dt,
                      lambda st: restricted_hamiltonian(geometry, st))


# -- lifted flow on the groupoid -------------------------------------------


def groupoid_rhs(geometry, sign):
    """Vectorized RHS for (u, v, p_v, tau) arrays.

    The (u, v, p_v) components coincide with the restricted generator at the
    range point; the tau component is the difference of leafwise drift
    coefficients between source and range, which keeps both legs of the
    groupoid element moving under the same base flow.
    """
    th = float(geometry.theta)

    def rhs(state):
        u, v, p, tau = state[..., 0], state[..., 1], state[..., 2], state[..., 3]
        cu, cv, cp = geometry.flow_coefficients(u, v)
        cu_src, _, _ = geometry.flow_coefficients(u - tau, v - th * tau)
        return np.stack([-cu * sign,
                         cv * sign,
                         cp * np.abs(p),
                         (cu_src - cu) * sign], axis=-1)

    return rhs


def groupoid_flow(geometry, point, t, dt, certificate=None, return_trajectory=False):
    """Flow a groupoid point (u, v, p_v, tau) for time t.

    Satisfies the intertwining relations with the restricted flow: the range
    (u, v, p_v) and the source (u - tau, v - theta*tau, p_v) each follow the
    restricted dynamics, up to integration error.
    """
    _require_certificate(certificate)
    point = np.asarray(point, dtype=float)
    if point[2] == 0.0:
        raise ZeroMomentum("p_v must be nonzero")
    sign = 1.0 if point[2] > 0 else -1.0
    rhs = groupoid_rhs(geometry, sign)

    def scalar_rhs(y):
        return rhs(y[None, :])[0]

    traj = _integrate(scalar_rhs, point, t, dt,
                      lambda st: restricted_hamiltonian(geometry, st[:3]))
    return traj if return_trajectory else traj.final


def groupoid_source(point, theta):
    u, v, p, tau = point
    th = float(theta)
    return np.array([u - tau, v - th * tau, p])


def groupoid_range(point):
    return np.asarray(point, dtype=float)[:3]


# -- reduced flow on T*S^1 ---------------------------------------------------


@dataclass(frozen=True)
class ReducedProfile:
    """a_H as a function of the reduced circle coordinate, with its derivative."""

    value: Callable
    derivative: Callable

    @classmethod
    def from_poly(cls, poly):
        """1D profile from a TrigPoly interpreted as a function of its first axis."""
        dpoly = poly.du()
        return cls(value=lambda y: poly(y, 0.0 * np.asarray(y)),
                   derivative=lambda y: dpoly(y, 0.0 * np.asarray(y)))

    @classmethod
    def from_geometry(cls, geometry):
        """Transverse a_H profile of a bundle-like metric with rational slope.

        The circle coordinate is y = v - theta*u taken mod 1/q and rescaled to
        [0, 1); the profile samples a_H along the transversal u = 0, so
        value(y) = a_H(0, y/q).
        """
        if not geometry.theta.is_rational:
            raise ValueError("reduced phase space needs a rational slope")
        q = geometry.theta.q

        def value(y):
            y = np.asarray(y, dtype=float)
            return geometry.a_H_at(0.0 * y, y / q)

        def derivative(y):
            y = np.asarray(y, dtype=float)
            return geometry.da_H_dv(0.0 * y, y / q) / q

        return cls(value=value, derivative=derivative)


def reduced_flow(profile, state, t, dt, return_trajectory=False):
    """Integrate the reduced dynamics on (y, eta).

        dy/dt   = sign(eta) / a_H(y)
        deta/dt = a_H(y)^{-2} a_H'(y) |eta|

    The reduced Hamiltonian h = |eta| / a_H(y) is conserved; eta keeps a
    constant sign (its rate vanishes with |eta|).
    """
    state = np.asarray(state, dtype=float)
    if state[1] == 0.0:
        raise ZeroMomentum("eta must be nonzero")
    sign = 1.0 if state[1] > 0 else -1.0

    def rhs(y):
        aH = profile.value(y[0])
        daH = profile.derivative(y[0])
        return np.array([sign / aH, daH * np.abs(y[1]) / aH ** 2])

    traj = _integrate(rhs, state, t, dt,
                      lambda st: np.abs(st[1]) / profile.value(st[0]))
    return traj if return_trajectory else ReducedState(*traj.final)


class ReducedState(NamedTuple):
    y: float
    eta: float


# -- CSV interchange ---------------------------------------------------------


RESTRICTED_COLUMNS = ("t", "u", "v", "p_v", "hamiltonian")
REDUCED_COLUMNS = ("t", "y", "eta", "h")


def trajectory_to_csv(traj, kind="restricted"):
    """Serialize a trajectory; kind selects the column schema."""
    cols = RESTRICTED_COLUMNS if kind == "restricted" else REDUCED_COLUMNS
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for i in range(len(traj.times)):
        row = [traj.times[i], *traj.states[i][: len(cols) - 2], traj.hamiltonian[i]]
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def initial_conditions_from_csv(text, kind="restricted"):
    """Read initial states (rows at t = 0, or all rows) from trajectory CSV."""
    cols = RESTRICTED_COLUMNS if kind == "restricted" else REDUCED_COLUMNS
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = [h.strip() for h in lines[0].split(",")]
    if header[: len(cols)] != list(cols):
        raise ValueError(f"expected columns {cols}, got {header}")
    states = []
    for ln in lines[1:]:
        vals = [float(x) for x in ln.split(",")]
        states.append(vals[1: len(cols) - 1])
    return np.array(states)
