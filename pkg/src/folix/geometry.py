"""Transverse geometry of a metric on the foliated 2-torus.

The metric  g = a du^2 + 2b du dv + c dv^2  with trig-polynomial
coefficients splits along the linear foliation of slope theta into a
leafwise part and a transverse part.  Everything derived here --
leafwise/transverse determinants, the transverse scale a_H, orthonormal
frames, the mean-curvature function F -- is an algebraic combination of
a, b, c and their coefficient-space derivatives, so every field can be
evaluated exactly at arbitrary points.  No sampled differentiation enters.

Key quantities (q = a + 2*b*theta + c*theta^2, p = a*c - b^2):

    det g_F = q,   det g = p,   a_H = sqrt(p / q)

    e_F = (1, theta) / sqrt(q)
    e_H = (-(b + c*theta), a + b*theta) / (sqrt(q) * sqrt(p))

    F = [d_u(b + c*theta) - d_v(a + b*theta)] / sqrt(p*q)
        - [(b + c*theta) d_u q - (a + b*theta) d_v q] / (2 sqrt(p) q^{3/2})

The metric is bundle-like iff (d_u + theta d_v) a_H = 0; for irrational
theta this forces a_H to be constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import GridMismatch, NonPositiveMetric
from .trigpoly import Slope, TrigPoly

DEFAULT_OVERSAMPLE = 4


@dataclass(frozen=True)
class MetricCoeffs:
    """Metric coefficients a, b, c as trig polynomials plus the leaf slope."""

    a: TrigPoly
    b: TrigPoly
    c: TrigPoly
    theta: Slope

    @classmethod
    def flat(cls, theta):
        one = TrigPoly.constant(1.0)
        zero = TrigPoly.constant(0.0)
        return cls(one, zero, one, theta)

    def max_support(self):
        return max(p.M for p in (self.a, self.b, self.c)), max(p.N for p in (self.a, self.b, self.c))


class BundleCheck(NamedTuple):
    """Result of the bundle-like test."""

    flag: bool
    max_violation: float
    a_H_constant: bool | None  # populated for irrational slopes


def eval_metric(metric, point):
    """Pointwise metric coefficients (a, b, c) at ``point = (u, v)``.

    Total and 1-periodic in both arguments.
    """
    u, v = point
    return (metric.a(u, v), metric.b(u, v), metric.c(u, v))


class _FieldStack:
    """Evaluate a family of trig polynomials at shared points in one pass.

    The phase arrays exp(2*pi*i*m*u), exp(2*pi*i*n*v) are computed once for
    the common support, then every member is a single contraction.  This is
    the hot path of characteristic integration.
    """

    def __init__(self, polys):
        M = max(p.M for p in polys)
        N = max(p.N for p in polys)
        self.M, self.N = M, N
        self.coeffs = np.stack([p._padded_to(M, N) for p in polys])

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        ms = np.arange(-self.M, self.M + 1)
        ns = np.arange(-self.N, self.N + 1)
        pu = np.exp(2j * np.pi * u[..., None] * ms)
        pv = np.exp(2j * np.pi * v[..., None] * ns)
        return np.einsum("...m,fmn,...n->f...", pu, self.coeffs, pv).real


class GeometryCache:
    """Derived transverse-geometric fields of a metric, exact pointwise.

    Built by :func:`build_geometry`.  Holds the combination polynomials,
    pointwise evaluators for every derived field, and samples of the
    fields on the requested grid.  Immutable after construction and safe
    to share across threads.
    """

    def __init__(self, metric, grid, oversample=DEFAULT_OVERSAMPLE):
        self.metric = metric
        self.theta = metric.theta
        self.grid = tuple(grid)
        th = float(metric.theta)

        a, b, c = metric.a, metric.b, metric.c
        self.q_poly = (a + 2.0 * th * b + th * th * c).trimmed()       # det g_F
        self.p_poly = (a * c - b * b).trimmed()                        # det g
        self.ab_theta = (a + th * b).trimmed()                         # a + b*theta
        self.bc_theta = (b + th * c).trimmed()                         # b + c*theta
        self.dq_u = self.q_poly.du()
        self.dq_v = self.q_poly.dv()
        self.dp_u = self.p_poly.du()
        self.dp_v = self.p_poly.dv()
        self.d_bc_u = self.bc_theta.du()
        self.d_ab_v = self.ab_theta.dv()
        self._stack = _FieldStack([self.q_poly, self.p_poly,
                                   self.dq_u, self.dq_v, self.dp_u, self.dp_v,
                                   self.ab_theta, self.bc_theta,
                                   self.d_bc_u, self.d_ab_v])

        # validation grid: finer of the requested grid and the
        # oversampled Fourier support of the combination polynomials
        Ms = max(self.p_poly.M, self.q_poly.M, 1)
        Ns = max(self.p_poly.N, self.q_poly.N, 1)
        n_fine_u = max(self.grid[0], oversample * (2 * Ms + 1))
        n_fine_v = max(self.grid[1], oversample * (2 * Ns + 1))
        self.fine_grid = (n_fine_u, n_fine_v)

        self._validate_positivity()

        # sampled fields on the requested grid
        uu, vv = self.mesh(*self.grid)
        self.det_gF = self.q_poly(uu, vv)
        self.det_g = self.p_poly(uu, vv)
        self.a_H = np.sqrt(self.det_g / self.det_gF)
        self.F = self.mean_curvature(uu, vv)
        sq = np.sqrt(self.det_gF)
        sp = np.sqrt(self.det_g)
        abv = self.ab_theta(uu, vv)
        bcv = self.bc_theta(uu, vv)
        self.e_F = np.stack([np.ones_like(sq) / sq, th / sq], axis=-1)
        self.e_H = np.stack([-bcv / (sq * sp), abv / (sq * sp)], axis=-1)
        self.E_F = np.stack([abv / sq, bcv / sq], axis=-1)
        self.E_H = np.stack([-th * sp / sq, sp / sq], axis=-1)

    # -- grids ---------------------------------------------------------

    @staticmethod
    def mesh(n_u, n_v):
        u = np.arange(n_u) / n_u
        v = np.arange(n_v) / n_v
        return np.meshgrid(u, v, indexing="ij")

    def _validate_positivity(self):
        uu, vv = self.mesh(*self.fine_grid)
        for name, field in (("a", self.metric.a(uu, vv)),
                            ("ac-b^2", self.p_poly(uu, vv)),
                            ("c", self.metric.c(uu, vv)),
                            ("det g_F", self.q_poly(uu, vv))):
            if np.min(field) <= 0.0:
                idx = np.unravel_index(np.argmin(field), field.shape)
                node = (uu[idx], vv[idx])
                raise NonPositiveMetric(
                    f"{name} = {field[idx]:.6g} <= 0 at grid node (u, v) = "
                    f"({node[0]:.6f}, {node[1]:.6f})", node=node)

    # -- exact pointwise evaluators -------------------------------------

    def q(self, u, v):
        return self.q_poly(u, v)

    def p(self, u, v):
        return self.p_poly(u, v)

    def a_H_at(self, u, v):
        return np.sqrt(self.p_poly(u, v) / self.q_poly(u, v))

    def da_H_dv(self, u, v):
        """Exact d(a_H)/dv via logarithmic differentiation."""
        p = self.p_poly(u, v)
        q = self.q_poly(u, v)
        return 0.5 * np.sqrt(p / q) * (self.dp_v(u, v) / p - self.dq_v(u, v) / q)

    def leafwise_derivative_a_H(self, u, v):
        """(d_u + theta d_v) a_H, exactly; zero iff the metric is bundle-like there."""
        th = float(self.theta)
        p = self.p_poly(u, v)
        q = self.q_poly(u, v)
        dp = self.dp_u(u, v) + th * self.dp_v(u, v)
        dq = self.dq_u(u, v) + th * self.dq_v(u, v)
        return 0.5 * np.sqrt(p / q) * (dp / p - dq / q)

    def mean_curvature(self, u, v):
        """The function F of the transverse Dirac operator, exact pointwise."""
        p = self.p_poly(u, v)
        q = self.q_poly(u, v)
        term1 = (self.d_bc_u(u, v) - self.d_ab_v(u, v)) / np.sqrt(p * q)
        term2 = (self.bc_theta(u, v) * self.dq_u(u, v)
                 - self.ab_theta(u, v) * self.dq_v(u, v)) / (2.0 * np.sqrt(p) * q ** 1.5)
        return term1 - term2

    def flow_and_curvature(self, u, v):
        """(cu, cv, cp, F) in one batched evaluation; the transport hot path."""
        q, p, dq_u, dq_v, dp_v, ab, bc, dbc_u, dab_v = self._stack(u, v)[[0, 1, 2, 3, 5, 6, 7, 8, 9]]
        a_H = np.sqrt(p / q)
        cu = a_H * bc / p
        cv = a_H * ab / p
        cp = 0.5 * a_H * (dp_v / p - dq_v / q) * q / p
        F = (dbc_u - dab_v) / np.sqrt(p * q) - (bc * dq_u - ab * dq_v) / (2.0 * np.sqrt(p) * q ** 1.5)
        return cu, cv, cp, F

    def flow_coefficients(self, u, v):
        """u-, v- and p_v-direction coefficients of the restricted geodesic generator.

        Returns (cu, cv, cp) with

            du/dt   = -cu * sign(p_v),   cu = a_H (b + c*theta) / (a c - b^2)
            dv/dt   = +cv * sign(p_v),   cv = a_H (a + b*theta) / (a c - b^2)
            dp_v/dt = cp * |p_v|,        cp = a_H^{-2} d(a_H)/dv
        """
        p = self.p_poly(u, v)
        q = self.q_poly(u, v)
        a_H = np.sqrt(p / q)
        cu = a_H * self.bc_theta(u, v) / p
        cv = a_H * self.ab_theta(u, v) / p
        cp = self.da_H_dv(u, v) / (p / q)
        return cu, cv, cp

    # -- weights for inner products --------------------------------------

    def volume_weight(self, u, v):
        """sqrt(det g), the Riemannian volume density."""
        return np.sqrt(self.p_poly(u, v))

    def leaf_weight(self, u, v):
        """sqrt(det g_F), the leafwise volume density."""
        return np.sqrt(self.q_poly(u, v))


def build_geometry(metric, grid, oversample=DEFAULT_OVERSAMPLE):
    """Construct the :class:`GeometryCache` for ``metric`` on ``grid = (n_u, n_v)``.

    Raises
    ------
    NonPositiveMetric
        If a, c, ac - b^2 or det g_F fails to be positive at a node of the
        validation grid (the requested grid refined to ``oversample`` times
        the coefficient Fourier support).
    """
    return GeometryCache(metric, grid, oversample=oversample)


def is_bundle_like(metric, tol, grid=(64, 64), oversample=DEFAULT_OVERSAMPLE):
    """Test the bundle-like criterion (d_u + theta d_v) a_H = 0.

    Returns a :class:`BundleCheck` with the sup of the exact leafwise
    derivative of a_H over the validation grid.  For irrational slopes the
    constancy of a_H (max - min against the same tol) is reported as well.
    """
    geom = build_geometry(metric, grid, oversample=oversample)
    uu, vv = geom.mesh(*geom.fine_grid)
    viol = np.max(np.abs(geom.leafwise_derivative_a_H(uu, vv)))
    a_H_const = None
    if not metric.theta.is_rational:
        field = geom.a_H_at(uu, vv)
        a_H_const = bool(np.max(field) - np.min(field) <= tol)
    return BundleCheck(flag=bool(viol <= tol), max_violation=float(viol), a_H_constant=a_H_const)


def mean_curvature(metric, point, grid=(16, 16)):
    """Mean-curvature function F at a single point."""
    geom = build_geometry(metric, grid)
    u, v = point
    return float(geom.mean_curvature(np.asarray(u, float), np.asarray(v, float)))


def _spectral_gradient(f):
    n_u, n_v = f.shape
    fh = np.fft.fft2(f)
    mu = np.fft.fftfreq(n_u) * n_u
    nv = np.fft.fftfreq(n_v) * n_v
    df_u = np.fft.ifft2(fh * (2j * np.pi * mu)[:, None])
    df_v = np.fft.ifft2(fh * (2j * np.pi * nv)[None, :])
    if np.isrealobj(f):
        return df_u.real, df_v.real
    return df_u, df_v


def transverse_derivatives(geometry, f):
    """Apply e_H and its formal adjoint e_H* = -e_H + F to a grid field.

    ``f`` must be sampled on ``geometry.grid``.  Derivatives are spectral
    (exact for band-limited fields); the coefficient fields multiply in
    physical space.

    Returns
    -------
    (e_H_f, e_H_star_f) : pair of grid fields
    """
    f = np.asarray(f)
    if f.shape != tuple(geometry.grid):
        raise GridMismatch(f"field shape {f.shape} does not match geometry grid {geometry.grid}")
    df_u, df_v = _spectral_gradient(f)
    e_H_f = geometry.e_H[..., 0] * df_u + geometry.e_H[..., 1] * df_v
    e_H_star_f = -e_H_f + geometry.F * f
    return e_H_f, e_H_star_f


def weighted_inner(geometry, f, g):
    """<f, g> = integral of conj(f) g sqrt(det g) du dv, trapezoid on the grid."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape or f.shape != tuple(geometry.grid):
        raise GridMismatch("fields must share the geometry grid")
    w = np.sqrt(geometry.det_g)
    return np.sum(np.conj(f) * g * w) / (f.shape[0] * f.shape[1])


# -- JSON interchange ----------------------------------------------------

def _poly_from_list(entries):
    terms = {}
    for m, n, re, im in entries:
        terms[(int(m), int(n))] = terms.get((int(m), int(n)), 0.0) + complex(re, im)
    # entries may list both (m,n) and (-m,-n); from_terms adds the
    # conjugate itself, so fold duplicates first
    folded = {}
    seen = set()
    for (m, n), amp in terms.items():
        if (m, n) in seen:
            continue
        if (-m, -n) in terms and (m, n) != (-m, -n):
            other = terms[(-m, -n)]
            if abs(np.conj(amp) - other) > 1e-12 * max(1.0, abs(amp)):
                raise ValueError(f"coefficients at ({m},{n}) and ({-m},{-n}) are not conjugate")
            seen.add((-m, -n))
        folded[(m, n)] = amp
    return TrigPoly.from_terms(folded)


def metric_from_json(obj):
    """Parse {"theta": ..., "a": [[m,n,re,im],...], "b": [...], "c": [...]}."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    th = obj["theta"]
    if "rational" in th:
        p, q = th["rational"]
        theta = Slope.rational(int(p), int(q))
    else:
        theta = Slope.real(float(th["real"]))
    return MetricCoeffs(
        a=_poly_from_list(obj["a"]),
        b=_poly_from_list(obj["b"]),
        c=_poly_from_list(obj["c"]),
        theta=theta,
    )


def metric_to_json(metric):
    def dump(poly):
        out = []
        c = poly.coeffs
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                if c[i, j] != 0:
                    out.append([i - poly.M, j - poly.N, c[i, j].real, c[i, j].imag])
        return out

    th = metric.theta
    theta_obj = {"rational": [th.p, th.q]} if th.is_rational else {"real": th.x}
    return {"theta": theta_obj, "a": dump(metric.a), "b": dump(metric.b), "c": dump(metric.c)}


def geometry_report(metric, grid=(64, 64), tol=1e-10):
    """JSON-ready summary used by the geometry-check command."""
    geom = build_geometry(metric, grid)
    check = is_bundle_like(metric, tol, grid=grid)
    return {
        "a_H_min": float(np.min(geom.a_H)),
        "a_H_max": float(np.max(geom.a_H)),
        "bundle_like": check.flag,
        "max_violation": check.max_violation,
        "F_min": float(np.min(geom.F)),
        "F_max": float(np.max(geom.F)),
    }
