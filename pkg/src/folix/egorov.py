"""Quantitative comparison of quantum conjugation against symbol transport.

The two evolutions agree to leading order in the transverse frequency; at
finite truncation that statement is operationalized by frequency-band
compression: project both evolved operators onto the modes with
n_lo <= |nu| <= n_hi, take the largest singular value of the difference
relative to the evolved operator, and check that the relative residual
decays as the band is pushed up (the remainder is one order lower, so
doubling the band should roughly halve it).

Band-symbol extraction reads the principal symbol of an arbitrary operator
off its matrix elements between leaf-localized wave packets

    p(u', v') = e^{2 pi i lambda (v' - theta u')} x (Gaussian window along
                the leaf through (u, v))

realized in mode space as Gaussian amplitudes around transverse frequency
lambda, with the pair offset tau entering as a leafwise phase.  The
reading converges to the symbol as the band rises, with O(1/lambda) bias
plus the quadratic window-smoothing terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac import heisenberg
from .errors import BandUnresolved
from .geometry import is_bundle_like
from .quantize import KernelSymbol, quantize
from .symbols import HomogeneousSymbol, transport


@dataclass(frozen=True)
class BandSpec:
    """Transverse Fourier frequencies n with n_lo <= |n| <= n_hi."""

    n_lo: int
    n_hi: int

    def __post_init__(self):
        if self.n_lo < 1 or self.n_hi < self.n_lo:
            raise BandUnresolved(f"invalid band [{self.n_lo}, {self.n_hi}]")

    def validate(self, modes):
        if self.n_hi > modes.Nv:
            raise BandUnresolved(f"band [{self.n_lo}, {self.n_hi}] exceeds the grid "
                                 f"Nyquist {modes.Nv}")

    def mask(self, modes):
        m = (np.abs(modes.NU) >= self.n_lo) & (np.abs(modes.NU) <= self.n_hi)
        return np.concatenate([m, m])   # both fiber components

    def doubled(self):
        return BandSpec(2 * self.n_lo, 2 * self.n_hi)


@dataclass
class EgorovReport:
    t: float
    band: BandSpec
    residual_norm: float
    reference_norm: float
    relative_residual: float
    decay_ratio: float | None = None

    def to_dict(self):
        return {
            "t": self.t,
            "n_lo": self.band.n_lo,
            "n_hi": self.band.n_hi,
            "residual": self.residual_norm,
            "reference": self.reference_norm,
            "relative": self.relative_residual,
            "decay_ratio": self.decay_ratio,
        }


def band_compress(K, band):
    """Submatrix of the operator on the band modes (P K P restricted)."""
    band.validate(K.modes)
    mask = band.mask(K.modes)
    return K.matrix[np.ix_(mask, mask)]


def operator_norm(M, tol=1e-8, max_iter=500):
    """Largest singular value by power iteration on M* M; deterministic start."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    x = np.ones(M.shape[1], dtype=complex)
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        y = M @ x
        x = M.conj().T @ y
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            return 0.0
        x /= nrm
        sigma = np.sqrt(nrm)
        if abs(sigma - prev) <= tol * max(sigma, 1.0):
            return float(sigma)
        prev = sigma
    return float(prev)


# -- band-symbol extraction ----------------------------------------------------


@dataclass
class ExtractionWindows:
    """Wave-packet width scales; actual widths shrink like 1/sqrt(lambda).

    The coherent-state scaling balances window-smoothing bias (quadratic in
    the widths) against frequency spread, making the reading converge as
    the band rises.  Widths are floored so the frequency spread stays
    resolved by the mode grid.
    """

    leaf_scale: float = 0.12
    trans_scale: float = 0.28
    n_lambda: int = 3

    def at(self, lam, modes):
        w_leaf = max(self.leaf_scale / np.sqrt(lam),
                     1.8 / (2.0 * np.pi * max(modes.Mu, 2)))
        w_trans = max(self.trans_scale / np.sqrt(lam), 0.02)
        return w_leaf, w_trans

    @classmethod
    def for_band(cls, modes, band):
        return cls()


def extract_band_symbol(K, band, geometry, out_grid, windows=None):
    """Estimate the degree-0 principal symbol of K from band matrix elements.

    out_grid = (n_u, n_v, n_tau, t_max) fixes the symbol grid of the
    estimate.  For each base point, momentum sign and pair offset tau the
    reading is

        < packet offset by tau along the leaf, K packet >  /
        ( sum of squared packet amplitudes * sqrt(det g_F) at the center )

    averaged over several carrier frequencies inside the band.
    """
    modes = K.modes
    band.validate(modes)
    if windows is None:
        windows = ExtractionWindows.for_band(modes, band)
    n_u, n_v, n_tau, t_max = out_grid
    theta = float(geometry.theta)
    tau = -t_max + (2.0 * t_max / n_tau) * np.arange(n_tau)

    lams = np.unique(np.linspace(band.n_lo + 1, band.n_hi - 1,
                                 windows.n_lambda).round().astype(int))
    lams = lams[(lams >= band.n_lo) & (lams <= band.n_hi)]
    if lams.size == 0:
        lams = np.array([(band.n_lo + band.n_hi) // 2])

    u0 = np.arange(n_u) / n_u
    v0 = np.arange(n_v) / n_v
    UU, VV = np.meshgrid(u0, v0, indexing="ij")
    centers = np.stack([UU.ravel(), VV.ravel()], axis=1)
    n_c = centers.shape[0]
    w_gf = np.sqrt(geometry.q_poly(centers[:, 0], centers[:, 1]))

    MU, NU = modes.MU, modes.NU
    leaf_freq = MU + theta * NU
    N = modes.n_scalar
    out = np.zeros((n_u, n_v, 2, n_tau, 2, 2), dtype=complex)
    tau_phase = np.exp(2j * np.pi * np.outer(leaf_freq, tau))   # (N, n_tau)

    for si, s in enumerate((+1.0, -1.0)):
        acc = np.zeros((n_c, n_tau, 2, 2), dtype=complex)
        for lam in lams:
            w_leaf, w_trans = windows.at(lam, modes)
            amp = (np.exp(-2.0 * np.pi ** 2 * w_leaf ** 2 * leaf_freq ** 2)
                   * np.exp(-2.0 * np.pi ** 2 * w_trans ** 2 * (NU - s * lam) ** 2))
            # the leafwise Gaussian weights form a unit-mass sampling kernel in
            # the leaf frequency (Poisson summation), so only the transverse
            # window mass divides out
            norm = np.sum(np.exp(-4.0 * np.pi ** 2 * w_trans ** 2
                                 * (modes.nu_axis - s * lam) ** 2))
            phase = np.exp(-2j * np.pi * (np.outer(centers[:, 0], MU)
                                          + np.outer(centers[:, 1], NU)))   # (n_c, N)
            packets = amp[None, :] * phase                                   # (n_c, N)
            # K applied to packets in each fiber slot: columns (n_c, fiber)
            P = np.zeros((2 * N, 2 * n_c), dtype=complex)
            P[:N, :n_c] = packets.T
            P[N:, n_c:] = packets.T
            KP = K.matrix @ P                                                # (2N, 2n_c)
            wconj = np.conj(packets)                                         # (n_c, N)
            for a in range(2):
                KP_a = KP[a * N:(a + 1) * N, :]
                for b in range(2):
                    cols = KP_a[:, b * n_c:(b + 1) * n_c]                    # (N, n_c)
                    acc[:, :, a, b] += np.einsum("cn,nt,nc->ct", wconj, tau_phase, cols,
                                                 optimize=True) / norm
        acc /= (lams.size * w_gf[:, None, None, None])
        out[:, :, si] = acc.reshape(n_u, n_v, n_tau, 2, 2)
    return HomogeneousSymbol(0, out, t_max, theta, check_support=False)


# -- residual studies -----------------------------------------------------------


def egorov_residual(k0sym, geometry, D, t, band, transport_dt=2e-3,
                    certificate=None, eta_max=None, n_eta=None,
                    _cache=None):
    """Band-compressed residual between Heisenberg evolution and transported symbol.

    A = Phi_t(quantize(k0)); B = quantize(transport(k0, t)); the report holds
    ||P (A - B) P|| and ||P A P|| (largest singular values of the band
    submatrices) and their ratio.
    """
    if certificate is None:
        certificate = is_bundle_like(geometry.metric, 1e-8, grid=geometry.grid)
    grid = (D.modes.n_u, D.modes.n_v)
    cache = _cache if _cache is not None else {}
    if "A" not in cache:
        K0 = quantize(k0sym, geometry, grid, eta_max=eta_max, n_eta=n_eta)
        cache["A"] = heisenberg(K0, D, t)
    if "B" not in cache:
        if t == 0.0:
            kt = k0sym.base
        else:
            kt = transport(k0sym.base, geometry, t, dt=transport_dt,
                           certificate=certificate)
        ksym_t = KernelSymbol(kt, transverse_cutoff=k0sym.transverse_cutoff,
                              frequency_cutoff=k0sym.frequency_cutoff)
        cache["B"] = quantize(ksym_t, geometry, grid, eta_max=eta_max, n_eta=n_eta)
    A, B = cache["A"], cache["B"]
    diff = band_compress(A - B, band)
    ref = band_compress(A, band)
    residual = operator_norm(diff)
    reference = operator_norm(ref)
    rel = residual / reference if reference > 0 else np.inf
    return EgorovReport(t=float(t), band=band, residual_norm=residual,
                        reference_norm=reference, relative_residual=rel)


def decay_study(k0sym, geometry, D, t, bands, transport_dt=2e-3,
                certificate=None, eta_max=None, n_eta=None):
    """Residual reports across increasing bands, with consecutive decay ratios.

    bands must be strictly increasing (by lower edge).  The evolved
    operators are computed once and compressed per band.
    """
    lows = [b.n_lo for b in bands]
    if sorted(lows) != lows or len(set(lows)) != len(lows):
        raise ValueError("bands must be strictly increasing")
    cache = {}
    reports = []
    for band in bands:
        rep = egorov_residual(k0sym, geometry, D, t, band,
                              transport_dt=transport_dt, certificate=certificate,
                              eta_max=eta_max, n_eta=n_eta, _cache=cache)
        if reports:
            prev = reports[-1].relative_residual
            rep.decay_ratio = rep.relative_residual / prev if prev > 0 else np.inf
        reports.append(rep)
    return reports


def decay_verdict(reports, threshold=0.6):
    """True when every consecutive band doubling decays by the threshold factor."""
    ratios = [r.decay_ratio for r in reports if r.decay_ratio is not None]
    if not ratios:
        return None
    return all(r <= threshold for r in ratios)


def reports_to_csv(reports):
    lines = ["t,n_lo,n_hi,residual,reference,relative,decay_ratio"]
    for r in reports:
        d = r.to_dict()
        ratio = "" if d["decay_ratio"] is None else f"{d['decay_ratio']:.17g}"
        lines.append(f"{d['t']:.17g},{d['n_lo']},{d['n_hi']},{d['residual']:.17g},"
                     f"{d['reference']:.17g},{d['relative']:.17g},{ratio}")
    return "\n".join(lines) + "\n"
