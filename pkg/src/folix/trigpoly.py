"""Finite trigonometric polynomials on the 2-torus.

A ``TrigPoly`` is a finite sum  sum_{m,n} c[m,n] exp(2*pi*i*(m*u + n*v))
with Hermitian-symmetric coefficients, so its values are real.  Coefficients
are stored densely on a small (2M+1) x (2N+1) block centred at (0, 0).
Exact arithmetic (sums, products, derivatives) happens in coefficient space,
which is what makes spectral differentiation of metric data exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np


class TrigPoly:
    """Real-valued trigonometric polynomial on T^2.

    Parameters
    ----------
    coeffs : ndarray, shape (2M+1, 2N+1), complex
        Coefficient c[m, n] sits at index [m + M, n + N].
    """

    def __init__(self, coeffs, tol=1e-12, enforce_hermitian=True):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[0] % 2 == 0 or coeffs.shape[1] % 2 == 0:
            raise ValueError("coefficient block must have odd shape (2M+1, 2N+1)")
        if enforce_hermitian:
            sym = np.conj(coeffs[::-1, ::-1])
            if np.max(np.abs(coeffs - sym)) > tol * max(1.0, np.max(np.abs(coeffs))):
                raise ValueError("coefficients are not Hermitian-symmetric; values would not be real")
            coeffs = 0.5 * (coeffs + sym)
        self.coeffs = coeffs
        self.M = coeffs.shape[0] // 2
        self.N = coeffs.shape[1] // 2

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value):
        return cls(np.array([[complex(value)]]))

    @classmethod
    def from_terms(cls, terms):
        """Build from {(m, n): amplitude}; the (-m, -n) conjugates are filled in."""
        if not terms:
            return cls.constant(0.0)
        M = max(abs(m) for m, _ in terms)
        N = max(abs(n) for _, n in terms)
        coeffs = np.zeros((2 * M + 1, 2 * N + 1), dtype=complex)
        for (m, n), amp in terms.items():
            coeffs[m + M, n + N] += amp
            if (m, n) != (0, 0):
                coeffs[-m + M, -n + N] += np.conj(amp)
        return cls(coeffs)

    @classmethod
    def cosine(cls, m, n, amplitude=1.0, phase=0.0):
        """amplitude * cos(2*pi*(m*u + n*v) + phase)."""
        amp = 0.5 * amplitude * np.exp(1j * phase)
        return cls.from_terms({(m, n): amp})

    # -- evaluation ----------------------------------------------------

    def __call__(self, u, v):
        """Evaluate at points (u, v); broadcasts over array input."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        ms = np.arange(-self.M, self.M + 1)
        ns = np.arange(-self.N, self.N + 1)
        pu = np.exp(2j * np.pi * u[..., None] * ms)        # (..., 2M+1)
        pv = np.exp(2j * np.pi * v[..., None] * ns)        # (..., 2N+1)
        val = np.einsum("...m,mn,...n->...", pu, self.coeffs, pv)
        return val.real if val.ndim else float(val.real)

    def sample(self, n_u, n_v):
        """Values on the uniform grid u_i = i/n_u, v_j = j/n_v."""
        u = np.arange(n_u) / n_u
        v = np.arange(n_v) / n_v
        uu, vv = np.meshgrid(u, v, indexing="ij")
        return self(uu, vv)

    # -- calculus ------------------------------------------------------

    def du(self):
        ms = np.arange(-self.M, self.M + 1)
        return TrigPoly(self.coeffs * (2j * np.pi * ms)[:, None], enforce_hermitian=False)

    def dv(self):
        ns = np.arange(-self.N, self.N + 1)
        return TrigPoly(self.coeffs * (2j * np.pi * ns)[None, :], enforce_hermitian=False)

    # -- algebra -------------------------------------------------------

    def _padded_to(self, M, N):
        out = np.zeros((2 * M + 1, 2 * N + 1), dtype=complex)
        out[M - self.M:M + self.M + 1, N - self.N:N + self.N + 1] = self.coeffs
        return out

    def __add__(self, other):
        other = _as_poly(other)
        M = max(self.M, other.M)
        N = max(self.N, other.N)
        return TrigPoly(self._padded_to(M, N) + other._padded_to(M, N), enforce_hermitian=False)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self + (-1.0) * _as_poly(other)

    def __rsub__(self, other):
        return _as_poly(other) + (-1.0) * self

    def __mul__(self, other):
        if np.isscalar(other):
            return TrigPoly(self.coeffs * float(other), enforce_hermitian=False)
        other = _as_poly(other)
        from scipy.signal import convolve2d

        return TrigPoly(convolve2d(self.coeffs, other.coeffs), enforce_hermitian=False)

    def __rmul__(self, other):
        return self.__mul__(other)

    @property
    def support(self):
        """(M, N) half-bandwidths of the coefficient block."""
        return self.M, self.N

    def trimmed(self, tol=0.0):
        """Drop all-zero outer rows/columns of the coefficient block."""
        c = self.coeffs
        M, N = self.M, self.N
        while M > 0 and np.max(np.abs(c[0])) <= tol and np.max(np.abs(c[-1])) <= tol:
            c = c[1:-1]
            M -= 1
        while N > 0 and np.max(np.abs(c[:, 0])) <= tol and np.max(np.abs(c[:, -1])) <= tol:
            c = c[:, 1:-1]
            N -= 1
        return TrigPoly(c, enforce_hermitian=False)

    def __repr__(self):
        nz = int(np.count_nonzero(self.coeffs))
        return f"TrigPoly(support=({self.M},{self.N}), nonzero={nz})"


def _as_poly(x):
    if isinstance(x, TrigPoly):
        return x
    if np.isscalar(x):
        return TrigPoly.constant(x)
    raise TypeError(f"cannot coerce {type(x)!r} to TrigPoly")


@dataclass(frozen=True)
class Slope:
    """Leaf slope theta, either exactly rational p/q (reduced) or a real number."""

    p: int | None = None
    q: int | None = None
    x: float | None = None

    @classmethod
    def rational(cls, p, q):
        if q <= 0:
            raise ValueError("q must be a positive integer")
        g = gcd(abs(p), q)
        if g == 0:
            g = 1
        return cls(p=p // g, q=q // g, x=None)

    @classmethod
    def real(cls, x):
        x = float(x)
        if not np.isfinite(x):
            raise ValueError("slope must be finite")
        # recognise exact rationals given as floats only on explicit request
        return cls(p=None, q=None, x=x)

    @property
    def is_rational(self):
        return self.p is not None

    @property
    def value(self):
        if self.is_rational:
            return self.p / self.q
        return self.x

    def as_fraction(self):
        if not self.is_rational:
            raise ValueError("slope is not rational")
        return Fraction(self.p, self.q)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        if self.is_rational:
            return f"Slope({self.p}/{self.q})"
        return f"Slope({self.x!r})"
