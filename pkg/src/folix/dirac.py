"""The transverse Dirac operator and its spectral calculus.

The operator is the 2x2 block matrix

    D = [[0, -(e_H - F/2)], [e_H - F/2, 0]]

acting on C^2-valued sections (half-densities trivialized by the volume
form sqrt(det g) du dv), formally self-adjoint for the weighted inner
product <f, g> = integral conj(f) g sqrt(det g).

Numerically everything is routed through the similarity-symmetrized form.
With s = multiplication by (det g)^{1/4},

    L = s (e_H - F/2) s^{-1} = e_H - F/2 - e_H(log det g)/4

is skew-adjoint for the *plain* L^2 product, so A = iL is Hermitian.  One
dense Hermitian eigensolve of the scalar matrix A yields the whole
calculus:

* spectrum of D: +/- alpha_j (the Z_2-grading pairs them exactly);
* <D> = (D^2 + I)^{1/2} is fiber-scalar: s^{-1} V sqrt(alpha^2+1) V* s per
  fiber component;
* the propagator exp(it<D>) and the Heisenberg conjugation Phi_t follow
  from the same eigendata, so the pair is exactly consistent.

Metrics whose coefficients do not depend on u commute with u-translations;
A is then block-diagonal over the mu index and the eigensolve runs per
block (the fast path that makes 32x64 grids cheap).
"""

from __future__ import annotations

import numpy as np

from .errors import AliasingDetected, EigSolverFailure, GridMismatch
from .operators import KernelOperator, ModeSpace


class DiracMatrix:
    """Assembled transverse Dirac operator with its eigendata."""

    def __init__(self, geometry, modes, L, S, eigvals, eigvecs, fast_path):
        self.geometry = geometry
        self.modes = modes
        self.L = L                      # scalar skew matrix, N x N
        self.S = S                      # scalar (det g)^(1/4) Toeplitz matrix
        self.eigvals = eigvals          # alpha_j, ascending
        self.eigvecs = eigvecs          # orthonormal columns of A = iL
        self.fast_path = fast_path
        self._S_inv = None

    # -- assembled forms ---------------------------------------------------

    @property
    def S_inv(self):
        if self._S_inv is None:
            self._S_inv = np.linalg.inv(self.S)
        return self._S_inv

    def sym_matrix(self):
        """S D S^{-1}, Hermitian; 2N x 2N fiber-major."""
        N = self.modes.n_scalar
        M = np.zeros((2, N, 2, N), dtype=complex)
        M[0, :, 1, :] = -self.L
        M[1, :, 0, :] = self.L
        return M.reshape(2 * N, 2 * N)

    def full_matrix(self):
        """D itself in the plain Fourier basis."""
        N = self.modes.n_scalar
        Lu = self.S_inv @ self.L @ self.S
        M = np.zeros((2, N, 2, N), dtype=complex)
        M[0, :, 1, :] = -Lu
        M[1, :, 0, :] = Lu
        return M.reshape(2 * N, 2 * N)

    def dirac_spectrum(self):
        """Eigenvalues of D: the exactly paired +/- alpha_j, sorted."""
        return np.sort(np.concatenate([self.eigvals, -self.eigvals]))

    def abs_spectrum(self):
        """Eigenvalues of <D> with their multiplicity-2 fiber pairing."""
        lam = np.sqrt(self.eigvals ** 2 + 1.0)
        return np.sort(np.concatenate([lam, lam]))

    def scalar_function(self, fn):
        """s^{-1} V fn(alpha) V* s: fiber-scalar functional calculus of A."""
        V = self.eigvecs
        core = (V * fn(self.eigvals)[None, :]) @ V.conj().T
        return self.S_inv @ core @ self.S

    def weight_matrix(self):
        """W = S* S, the Gram matrix of the weighted inner product (scalar part)."""
        return self.S.conj().T @ self.S

    def hermiticity_residual(self):
        A = 1j * self.L
        return float(np.max(np.abs(A - A.conj().T)))


def _coefficient_fields(geometry, modes):
    """Exact coefficient fields of L on the collocation grid."""
    uu, vv = modes.quad_mesh()
    q = geometry.q_poly(uu, vv)
    p = geometry.p_poly(uu, vv)
    sqp = np.sqrt(q * p)
    alpha = -geometry.bc_theta(uu, vv) / sqp          # e_H^u
    beta = geometry.ab_theta(uu, vv) / sqp            # e_H^v
    F = geometry.mean_curvature(uu, vv)
    dlogdet = (alpha * geometry.dp_u(uu, vv) + beta * geometry.dp_v(uu, vv)) / p
    zer = -0.5 * F - 0.25 * dlogdet
    quarter = p ** 0.25
    return alpha, beta, zer, quarter


def _is_u_independent(geometry):
    return all(poly.M == 0 for poly in
               (geometry.metric.a, geometry.metric.b, geometry.metric.c))


def assemble_dirac(geometry, grid, oversample=4, check_aliasing=False):
    """Assemble the Dirac operator on the symmetric mode set of ``grid``.

    Matrix elements of L = alpha d_u + beta d_v + zer are Toeplitz in the
    mode offsets with tables read off the oversampled collocation grid:

        L[(mu', nu'), (mu, nu)] = 2 pi i (mu alpha^ + nu beta^)(mu'-mu, nu'-nu)
                                  + zer^(mu'-mu, nu'-nu)

    ``check_aliasing`` reassembles on a doubled collocation grid and raises
    AliasingDetected if any entry moves by more than 1e-6.
    """
    modes = ModeSpace(*grid, oversample=oversample)
    L, S = _assemble_L(geometry, modes)
    if check_aliasing:
        modes2 = ModeSpace(*grid, oversample=2 * oversample)
        L2, _ = _assemble_L(geometry, modes2)
        drift = float(np.max(np.abs(L - L2)))
        if drift > 1e-6:
            raise AliasingDetected(f"collocation-grid doubling moved matrix entries "
                                   f"by {drift:.3e} > 1e-6")

    A = 1j * L
    herm = float(np.max(np.abs(A - A.conj().T)))
    A = 0.5 * (A + A.conj().T)
    fast = _is_u_independent(geometry)
    try:
        if fast:
            eigvals = np.empty(modes.n_scalar)
            eigvecs = np.zeros((modes.n_scalar, modes.n_scalar), dtype=complex)
            n_nu = 2 * modes.Nv + 1
            for i_mu in range(2 * modes.Mu + 1):
                sl = slice(i_mu * n_nu, (i_mu + 1) * n_nu)
                w, V = np.linalg.eigh(A[sl, sl])
                eigvals[sl] = w
                eigvecs[sl, sl] = V
        else:
            eigvals, eigvecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise EigSolverFailure(str(exc)) from exc

    D = DiracMatrix(geometry, modes, L, S, eigvals, eigvecs, fast)
    D.assembly_hermiticity = herm
    return D


def _assemble_L(geometry, modes):
    alpha, beta, zer, quarter = _coefficient_fields(geometry, modes)
    Ta = modes.toeplitz(alpha.astype(complex))
    Tb = modes.toeplitz(beta.astype(complex))
    Tz = modes.toeplitz(zer.astype(complex))
    S = modes.toeplitz(quarter.astype(complex))
    mu_col = 2j * np.pi * modes.MU[None, :]
    nu_col = 2j * np.pi * modes.NU[None, :]
    L = Ta * mu_col + Tb * nu_col + Tz
    return L, S


def abs_dirac(D):
    """<D> = (D^2 + I)^{1/2} as a full fiber-major matrix; eigenvalues >= 1."""
    core = D.scalar_function(lambda a: np.sqrt(a * a + 1.0))
    N = D.modes.n_scalar
    M = np.zeros((2, N, 2, N), dtype=complex)
    M[0, :, 0, :] = core
    M[1, :, 1, :] = core
    return M.reshape(2 * N, 2 * N)


class Propagator:
    """U(t) = exp(it <D>); unitary for the weighted inner product."""

    def __init__(self, D, t):
        self.D = D
        self.t = float(t)
        lam = np.sqrt(D.eigvals ** 2 + 1.0)
        V = D.eigvecs
        core = (V * np.exp(1j * self.t * lam)[None, :]) @ V.conj().T
        self.scalar_forward = D.S_inv @ core @ D.S
        core_b = (V * np.exp(-1j * self.t * lam)[None, :]) @ V.conj().T
        self.scalar_backward = D.S_inv @ core_b @ D.S

    def full_matrix(self):
        N = self.D.modes.n_scalar
        M = np.zeros((2, N, 2, N), dtype=complex)
        M[0, :, 0, :] = self.scalar_forward
        M[1, :, 1, :] = self.scalar_forward
        return M.reshape(2 * N, 2 * N)


def propagate(D, t):
    return Propagator(D, t)


def heisenberg(K, D, t):
    """Phi_t(K) = exp(it<D>) K exp(-it<D>).

    Finite-dimensional conjugation: exactly multiplicative, unital, and
    compatible with weighted adjoints.  <D> is fiber-scalar, so the
    conjugation acts block-wise on the 2x2 fiber structure of K.
    """
    if K.modes.dim != 2 * D.modes.n_scalar:
        raise GridMismatch("operator and Dirac matrix live on different grids")
    P = propagate(D, t)
    N = D.modes.n_scalar
    blocks = K.matrix.reshape(2, N, 2, N)
    out = np.empty_like(blocks)
    for a in range(2):
        for b in range(2):
            out[a, :, b, :] = P.scalar_forward @ blocks[a, :, b, :] @ P.scalar_backward
    return KernelOperator(out.reshape(2 * N, 2 * N), K.modes,
                          {**K.meta, "heisenberg_t": t})


def weighted_adjoint(K, D):
    """Adjoint with respect to <f, g> = integral conj(f) g sqrt(det g)."""
    W = D.weight_matrix()
    N = D.modes.n_scalar
    blocks = K.matrix.reshape(2, N, 2, N)
    out = np.empty_like(blocks)
    Winv_ct = np.linalg.solve(W, np.eye(N, dtype=complex))
    for a in range(2):
        for b in range(2):
            out[a, :, b, :] = Winv_ct @ blocks[b, :, a, :].conj().T @ W
    return KernelOperator(out.reshape(2 * N, 2 * N), K.modes, K.meta)


def spectrum_csv(D, group_tol=1e-8):
    """CSV of sorted eigenvalues of D and <D> with multiplicity grouping."""
    lines = ["operator,eigenvalue,multiplicity"]
    for name, vals in (("D", D.dirac_spectrum()), ("absD", D.abs_spectrum())):
        groups = []
        for x in vals:
            if groups and abs(x - groups[-1][0]) <= group_tol:
                groups[-1][1] += 1
                groups[-1][0] = groups[-1][0] + (x - groups[-1][0]) / groups[-1][1]
            else:
                groups.append([float(x), 1])
        for val, mult in groups:
            lines.append(f"{name},{val:.17g},{mult}")
    return "\n".join(lines) + "\n"
