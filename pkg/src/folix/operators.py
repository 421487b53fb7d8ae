"""Mode-space plumbing shared by the quantizer and the Dirac assembly.

Operators act on C^2-valued sections of the torus through their Fourier
coefficients on the symmetric mode set

    mu in [-n_u//2, n_u//2],  nu in [-n_v//2, n_v//2],

flattened mu-major; the full matrix is fiber-major, so a (2, N, 2, N)
block layout reshapes to (2N, 2N).  Coefficient multiplication operators
are Toeplitz in the mode indices; their coefficient tables come from an
oversampled collocation grid, which keeps matrix elements alias-free for
the analytic coefficient fields arising from trig-polynomial metrics.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import GridMismatch


class ModeSpace:
    """Symmetric truncated Fourier basis with a collocation grid."""

    def __init__(self, n_u, n_v, oversample=4):
        self.n_u = int(n_u)
        self.n_v = int(n_v)
        self.Mu = self.n_u // 2
        self.Nv = self.n_v // 2
        mus = np.arange(-self.Mu, self.Mu + 1)
        nus = np.arange(-self.Nv, self.Nv + 1)
        self.mu_axis = mus
        self.nu_axis = nus
        MU, NU = np.meshgrid(mus, nus, indexing="ij")
        self.MU = MU.ravel()
        self.NU = NU.ravel()
        self.n_scalar = self.MU.size
        self.dim = 2 * self.n_scalar
        # collocation grid: alias-free for Toeplitz tables up to offsets
        # (2 Mu, 2 Nv) against analytic fields
        self.quad_u = max(oversample * max(self.n_u, 1), 4 * self.Mu + 4)
        self.quad_v = max(oversample * max(self.n_v, 1), 4 * self.Nv + 4)

    # -- grids -----------------------------------------------------------

    def quad_mesh(self):
        u = np.arange(self.quad_u) / self.quad_u
        v = np.arange(self.quad_v) / self.quad_v
        return np.meshgrid(u, v, indexing="ij")

    @property
    def section_shape(self):
        """Physical grid carrying exactly the resolved modes (odd sizes)."""
        return (2 * self.Mu + 1, 2 * self.Nv + 1)

    def flat_index(self, mu, nu):
        return (np.asarray(mu) + self.Mu) * (2 * self.Nv + 1) + (np.asarray(nu) + self.Nv)

    # -- section <-> coefficient transforms --------------------------------

    def analyze(self, field):
        """Grid section (odd grid) -> coefficient vector of length n_scalar."""
        gu, gv = self.section_shape
        if field.shape != (gu, gv):
            raise GridMismatch(f"expected section grid {(gu, gv)}, got {field.shape}")
        fh = np.fft.fft2(field) / (gu * gv)
        coeff = np.empty(self.n_scalar, dtype=complex)
        coeff[self.flat_index(self.MU, self.NU)] = fh[self.MU % gu, self.NU % gv]
        return coeff

    def synthesize(self, coeff):
        gu, gv = self.section_shape
        fh = np.zeros((gu, gv), dtype=complex)
        fh[self.MU % gu, self.NU % gv] = coeff[self.flat_index(self.MU, self.NU)]
        return np.fft.ifft2(fh) * (gu * gv)

    # -- Toeplitz multiplication operators ---------------------------------

    def coefficient_table(self, field_on_quad):
        """FFT coefficient table of a quad-grid field, for Toeplitz indexing."""
        return np.fft.fft2(field_on_quad) / field_on_quad.size

    def toeplitz(self, field_on_quad):
        """Dense scalar matrix of multiplication by a quad-grid field."""
        table = self.coefficient_table(field_on_quad)
        dmu = self.MU[:, None] - self.MU[None, :]
        dnu = self.NU[:, None] - self.NU[None, :]
        return table[dmu % self.quad_u, dnu % self.quad_v]


class KernelOperator:
    """Dense operator on Fourier(x)C^2 coefficients, fiber-major flattening.

    ``meta`` records assembly parameters (quadrature, cutoffs) for
    reproducibility; it travels with the serialized form.
    """

    def __init__(self, matrix, modes, meta=None):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (modes.dim, modes.dim):
            raise GridMismatch(f"matrix shape {matrix.shape} does not match mode space "
                               f"dim {modes.dim}")
        self.matrix = matrix
        self.modes = modes
        self.meta = dict(meta or {})

    @classmethod
    def from_scalar_blocks(cls, blocks, modes, meta=None):
        """Assemble from a (2, 2) nest of scalar mode matrices."""
        N = modes.n_scalar
        M = np.zeros((2, N, 2, N), dtype=complex)
        for a in range(2):
            for b in range(2):
                M[a, :, b, :] = blocks[a][b]
        return cls(M.reshape(2 * N, 2 * N), modes, meta)

    def scalar_block(self, a, b):
        N = self.modes.n_scalar
        return self.matrix.reshape(2, N, 2, N)[a, :, b, :]

    def __add__(self, other):
        self._check(other)
        return KernelOperator(self.matrix + other.matrix, self.modes, self.meta)

    def __sub__(self, other):
        self._check(other)
        return KernelOperator(self.matrix - other.matrix, self.modes, self.meta)

    def __matmul__(self, other):
        self._check(other)
        return KernelOperator(self.matrix @ other.matrix, self.modes, self.meta)

    def __rmul__(self, scalar):
        return KernelOperator(scalar * self.matrix, self.modes, self.meta)

    def _check(self, other):
        if other.modes.dim != self.modes.dim or \
                (other.modes.n_u, other.modes.n_v) != (self.modes.n_u, self.modes.n_v):
            raise GridMismatch("operators live on different mode spaces")

    @classmethod
    def identity(cls, modes):
        return cls(np.eye(modes.dim, dtype=complex), modes, {"kind": "identity"})


def apply_operator(K, f):
    """Apply a KernelOperator to section data f of shape (gu, gv, 2).

    f must be band-limited to the mode grid (it is sampled on the odd
    section grid, which carries exactly the resolved modes).  Linear;
    returns section data on the same grid.
    """
    modes = K.modes
    gu, gv = modes.section_shape
    f = np.asarray(f, dtype=complex)
    if f.shape != (gu, gv, 2):
        raise GridMismatch(f"expected section data {(gu, gv, 2)}, got {f.shape}")
    coeff = np.concatenate([modes.analyze(f[:, :, 0]), modes.analyze(f[:, :, 1])])
    out = K.matrix @ coeff
    N = modes.n_scalar
    return np.stack([modes.synthesize(out[:N]), modes.synthesize(out[N:])], axis=-1)


def multiplication_operator(modes, field_fn):
    """Operator of pointwise multiplication by a scalar function of (u, v)."""
    uu, vv = modes.quad_mesh()
    field = field_fn(uu, vv) if callable(field_fn) else field_fn
    T = modes.toeplitz(np.asarray(field, dtype=complex))
    Z = np.zeros_like(T)
    return KernelOperator.from_scalar_blocks([[T, Z], [Z, T]], modes,
                                             {"kind": "multiplication"})


# -- serialization -----------------------------------------------------------

_MAGIC_OP = 0x464C584F  # "FLXO"


def operator_to_bytes(K):
    header = np.array([_MAGIC_OP, K.modes.dim, K.modes.n_u, K.modes.n_v],
                      dtype="<i8")
    return header.tobytes() + np.ascontiguousarray(K.matrix, dtype="<c16").tobytes()


def operator_from_bytes(buf, meta=None):
    header = np.frombuffer(buf[:32], dtype="<i8")
    if header[0] != _MAGIC_OP:
        raise ValueError("not an operator blob")
    dim, n_u, n_v = (int(x) for x in header[1:4])
    modes = ModeSpace(n_u, n_v)
    if modes.dim != dim:
        raise ValueError("inconsistent operator header")
    matrix = np.frombuffer(buf[32:], dtype="<c16").reshape(dim, dim).copy()
    return KernelOperator(matrix, modes, meta)


def operator_sidecar(K):
    return {
        "kind": "kernel_operator",
        "dim": K.modes.dim,
        "grid": {"n_u": K.modes.n_u, "n_v": K.modes.n_v},
        "layout": "int64 magic, dim, n_u, n_v; then complex128 entries, "
                  "row-major, fiber-major flattening (fiber*n_scalar + mode)",
        "meta": K.meta,
    }


def save_operator(K, path):
    with open(path, "wb") as f:
        f.write(operator_to_bytes(K))
    with open(str(path) + ".json", "w") as f:
        json.dump(operator_sidecar(K), f, indent=2, sort_keys=True)


def load_operator(path):
    with open(path, "rb") as f:
        return operator_from_bytes(f.read())
