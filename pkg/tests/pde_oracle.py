"""Independent finite-difference solver for the symbol transport equation.

Discretizes

    dk/dt = -s cu(u,v) d_u k + s cv(u,v) d_v k
            + s (cu(u - tau, v - theta tau) - cu(u,v)) d_tau k
            + [ m * cp(u,v) - s (F(u,v) + F(u - tau, v - theta tau)) / 2 ] k

per momentum sign s on an (u, v, tau) grid with second-order upwind-biased
one-sided differences and Heun time stepping.  Written independently of the
characteristics code in folix.symbols: same coefficient fields, entirely
different discretization.  Axes along which nothing moves are detected and
left unrefined.
"""

import numpy as np


def _upwind_derivative(k, speed, axis, h, periodic=True):
    """Second-order one-sided derivative biased into the wind.

    For dk/dt = speed * d_x k, information flows from x + speed*t, so the
    stencil leans toward +x where speed > 0 and toward -x where speed < 0.
    """
    kp1 = np.roll(k, -1, axis=axis)
    kp2 = np.roll(k, -2, axis=axis)
    km1 = np.roll(k, 1, axis=axis)
    km2 = np.roll(k, 2, axis=axis)
    if not periodic:
        # zero-extension outside the tau window (symbols vanish in the buffer)
        n = k.shape[axis]
        idx = [slice(None)] * k.ndim

        def zero(arr, rows):
            idx2 = list(idx)
            idx2[axis] = rows
            arr[tuple(idx2)] = 0.0

        zero(kp1, slice(n - 1, n))
        zero(kp2, slice(n - 2, n))
        zero(km1, slice(0, 1))
        zero(km2, slice(0, 2))
    fwd = (-3.0 * k + 4.0 * kp1 - kp2) / (2.0 * h)
    bwd = (3.0 * k - 4.0 * km1 + km2) / (2.0 * h)
    return np.where(speed > 0, fwd, bwd)


def transport_oracle(k0, geometry, t, refine=8, cfl=0.35):
    """Solve the transport initial value problem; returns values on k0's grid."""
    n_u, n_v, _, n_tau = k0.values.shape[:4]
    th = float(geometry.theta)
    out = np.empty_like(k0.values)

    # probe speeds to decide which axes move
    uu0, vv0, tt0 = np.meshgrid(np.arange(n_u) / n_u, np.arange(n_v) / n_v,
                                k0.tau_grid, indexing="ij")
    cu0, cv0, _, f_r0 = geometry.flow_and_curvature(uu0, vv0)
    cus0, _, _, f_s0 = geometry.flow_and_curvature(uu0 - tt0, vv0 - th * tt0)
    moving_u = np.max(np.abs(cu0)) > 1e-14
    moving_v = np.max(np.abs(cv0)) > 1e-14
    moving_tau = np.max(np.abs(cus0 - cu0)) > 1e-14

    ru = refine if moving_u else 1
    rv = refine if moving_v else 1
    rt = refine if moving_tau else 1
    N_u, N_v, N_t = n_u * ru, n_v * rv, n_tau * rt
    h_u, h_v = 1.0 / N_u, 1.0 / N_v
    h_t = 2.0 * k0.t_max / N_t

    # collapse axes that neither move nor carry any variation: the PDE is a
    # pure batch over them (common for axis u with v-only metrics)
    def _const_along(arr, axis):
        return np.max(np.abs(arr - np.take(arr, [0], axis=axis))) < 1e-13

    collapse_u = (not moving_u and _const_along(k0.values, 0)
                  and _const_along(cv0, 0) and _const_along(cus0 - cu0, 0)
                  and _const_along(f_r0, 0) and _const_along(f_s0, 0))
    if collapse_u:
        N_u = 1

    u = np.arange(N_u) / N_u
    v = np.arange(N_v) / N_v
    tau = -k0.t_max + h_t * np.arange(N_t)
    uu, vv, tt = np.meshgrid(u, v, tau, indexing="ij")
    cu, cv, cp, f_r = geometry.flow_and_curvature(uu, vv)
    cu_s, _, _, f_s = geometry.flow_and_curvature(uu - tt, vv - th * tt)
    c_tau = cu_s - cu

    speeds = [np.max(np.abs(cu)) / h_u if moving_u else 0.0,
              np.max(np.abs(cv)) / h_v if moving_v else 0.0,
              np.max(np.abs(c_tau)) / h_t if moving_tau else 0.0]
    rate = sum(speeds)
    n_steps = max(1, int(np.ceil(abs(t) * rate / cfl))) if rate > 0 else max(1, int(abs(t) / 1e-2))
    dt = t / n_steps

    fibers = [(a, b) for a in range(2) for b in range(2)
              if np.max(np.abs(k0.values[:, :, :, :, a, b])) > 0]
    if not fibers:
        return np.zeros_like(k0.values)

    for si, s in enumerate((+1.0, -1.0)):
        zer = (k0.degree * cp - 0.5 * s * (f_r + f_s))[..., None]
        w_u = (-s * cu)[..., None]
        w_v = (s * cv)[..., None]
        w_t = (s * c_tau)[..., None]

        def rhs(k):
            dk = zer * k
            if moving_u:
                dk = dk + w_u * _upwind_derivative(k, w_u, 0, h_u)
            if moving_v:
                dk = dk + w_v * _upwind_derivative(k, w_v, 1, h_v)
            if moving_tau:
                dk = dk + w_t * _upwind_derivative(k, w_t, 2, h_t, periodic=False)
            return dk

        k = np.stack([_refine_field(k0.values[:, :, si, :, a, b], ru, rv, rt)
                      for a, b in fibers], axis=-1)
        for _ in range(n_steps):
            k1 = rhs(k)
            k2 = rhs(k + dt * k1)
            k = k + 0.5 * dt * (k1 + k2)
        coarse = k[::ru, ::rv, ::rt]
        out[:, :, si] = 0.0
        for i, (a, b) in enumerate(fibers):
            out[:, :, si, :, a, b] = coarse[..., i]
    return out


def _refine_field(k, ru, rv, rt):
    """Fourier refinement in (u, v), cubic in tau (compact support)."""
    from scipy.ndimage import map_coordinates

    n_u, n_v, n_t = k.shape
    if ru > 1 or rv > 1:
        kh = np.fft.fft2(k, axes=(0, 1))
        pad = np.zeros((n_u * ru, n_v * rv, n_t), dtype=complex)
        iu = np.fft.fftfreq(n_u, 1.0 / n_u).astype(int)
        iv = np.fft.fftfreq(n_v, 1.0 / n_v).astype(int)
        pad[np.ix_(iu % (n_u * ru), iv % (n_v * rv))] = kh * ru * rv
        k = np.fft.ifft2(pad, axes=(0, 1))
    if rt > 1:
        n_fine = n_t * rt
        idx = (np.arange(n_fine) / rt).astype(float)
        iu2, iv2, it2 = np.meshgrid(np.arange(k.shape[0]), np.arange(k.shape[1]),
                                    idx, indexing="ij")
        coords = np.stack([iu2.ravel(), iv2.ravel(), it2.ravel()])
        re = map_coordinates(k.real, coords, order=3, mode="grid-wrap")
        im = map_coordinates(k.imag, coords, order=3, mode="grid-wrap")
        k = (re + 1j * im).reshape(k.shape[0], k.shape[1], n_fine)
    return k
