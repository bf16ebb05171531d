# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell kernels for the implicit-step inner loop.

Formula-for-formula mirror of the NumPy backend: gauge of the body, prototype
density derivatives, quintic truncation ramp, radial convexifier, eps lift.
The only intended numerical difference is the polytope gauge, evaluated here
as the exact limit of the scale bisection (the active half-plane functional).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()


cdef inline double _pospow(double base, double expo) nogil:
    if base <= 0.0:
        return 0.0
    if expo == 0.0:
        return 1.0
    return pow(base, expo)


cdef inline void _psi(double s, double kt, double* val, double* d1, double* d2) nogil:
    cdef double u, w, w1, w2
    if s <= kt:
        val[0] = s
        d1[0] = 1.0
        d2[0] = 0.0
        return
    if s >= kt + 1.0:
        val[0] = kt + 1.0
        d1[0] = 0.0
        d2[0] = 0.0
        return
    u = s - kt
    w = u + u * u * u * (4.0 - 7.0 * u + 3.0 * u * u)
    w1 = 1.0 + u * u * (12.0 - 28.0 * u + 15.0 * u * u)
    w2 = u * (24.0 - 84.0 * u + 60.0 * u * u)
    val[0] = kt + w
    d1[0] = w1
    d2[0] = w2


cdef inline void _phi(double s, double r0, double ell, double kappa,
                      double* h, double* h1, double* h2) nogil:
    cdef double u, so
    if s <= r0:
        h[0] = 0.0
        h1[0] = 0.0
        h2[0] = 0.0
        return
    if s < r0 + ell:
        u = (s - r0) / ell
        h2[0] = kappa * u * u * (3.0 - 2.0 * u)
        h1[0] = kappa * ell * u * u * u * (1.0 - 0.5 * u)
        h[0] = kappa * ell * ell * u * u * u * u * (0.25 - 0.1 * u)
        return
    so = s - r0 - 0.5 * ell
    h2[0] = kappa
    h1[0] = kappa * so
    h[0] = 0.5 * kappa * so * so + kappa * ell * ell / 40.0


cdef inline double _gauge_grad(int kind, double[:, ::1] bd, int m,
                               double x, double y, double* dgx, double* dgy) nogil:
    cdef double s, g, wx, wy, v, best
    cdef int i, ib
    if kind == 0:
        s = sqrt(x * x + y * y)
        if s == 0.0:
            dgx[0] = 0.0
            dgy[0] = 0.0
            return 0.0
        dgx[0] = x / (bd[0, 0] * s)
        dgy[0] = y / (bd[0, 0] * s)
        return s / bd[0, 0]
    if kind == 1:
        wx = bd[0, 0] * x + bd[0, 1] * y
        wy = bd[1, 0] * x + bd[1, 1] * y
        g = x * wx + y * wy
        g = sqrt(g if g > 0.0 else 0.0)
        if g == 0.0:
            dgx[0] = 0.0
            dgy[0] = 0.0
            return 0.0
        dgx[0] = wx / g
        dgy[0] = wy / g
        return g
    if x == 0.0 and y == 0.0:
        dgx[0] = 0.0
        dgy[0] = 0.0
        return 0.0
    best = -1e300
    ib = 0
    for i in range(m):
        v = bd[i, 0] * x + bd[i, 1] * y
        if v > best:
            best = v
            ib = i
    dgx[0] = bd[ib, 0]
    dgy[0] = bd[ib, 1]
    return best if best > 0.0 else 0.0


cdef inline void _gauge_hess_vec(int kind, double[:, ::1] bd, double x, double y,
                                 double g, double px, double py,
                                 double* ox, double* oy) nogil:
    cdef double s, ux, uy, dot, wx, wy, qpx, qpy, wdp, g2
    if kind == 2 or g == 0.0:
        ox[0] = 0.0
        oy[0] = 0.0
        return
    if kind == 0:
        s = g * bd[0, 0]
        ux = x / s
        uy = y / s
        dot = ux * px + uy * py
        ox[0] = (px - dot * ux) / (bd[0, 0] * s)
        oy[0] = (py - dot * uy) / (bd[0, 0] * s)
        return
    wx = bd[0, 0] * x + bd[0, 1] * y
    wy = bd[1, 0] * x + bd[1, 1] * y
    qpx = bd[0, 0] * px + bd[0, 1] * py
    qpy = bd[1, 0] * px + bd[1, 1] * py
    wdp = wx * px + wy * py
    g2 = g * g
    ox[0] = (qpx - wx * wdp / g2) / g
    oy[0] = (qpy - wy * wdp / g2) / g


def _body_matrix(reg):
    params = reg.kernel_params()
    bd = np.asarray(params.body_data, dtype=np.float64)
    if params.body_kind == 0:
        bd = bd.reshape(1, 1)
    elif params.body_kind == 1:
        bd = bd.reshape(2, 2)
    else:
        bd = bd.reshape(-1, 2)
    return params, np.ascontiguousarray(bd)


def cell_energy_flux(gx, gy, a, reg):
    """Per-cell integrand value and flux components for gradient rows (gx, gy)."""
    params, bdarr = _body_matrix(reg)
    cdef double[::1] xs = np.ascontiguousarray(np.ravel(gx), dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(np.ravel(gy), dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(np.ravel(a), dtype=np.float64)
    cdef double[:, ::1] bd = bdarr
    cdef int kind = params.body_kind
    cdef int m = bd.shape[0]
    cdef double p = params.p
    cdef double kt = params.k_tilde
    cdef double r0 = params.phi_r0
    cdef double ell = params.phi_ell
    cdef double kappa = params.phi_kappa
    cdef double eps = params.epsilon
    cdef Py_ssize_t n = xs.shape[0]

    out_v = np.empty(n)
    out_hx = np.empty(n)
    out_hy = np.empty(n)
    cdef double[::1] vv = out_v
    cdef double[::1] hxv = out_hx
    cdef double[::1] hyv = out_hy

    cdef Py_ssize_t i
    cdef double x, y, g, dgx, dgy, gm1, f0, dphi, pv, p1, p2, s, h, h1, h2
    cdef double coeff, ux, uy
    with nogil:
        for i in range(n):
            x = xs[i]
            y = ys[i]
            g = _gauge_grad(kind, bd, m, x, y, &dgx, &dgy)
            gm1 = g - 1.0
            f0 = av[i] / p * _pospow(gm1, p)
            dphi = av[i] * _pospow(gm1, p - 1.0)
            _psi(f0, kt, &pv, &p1, &p2)
            s = sqrt(x * x + y * y)
            _phi(s, r0, ell, kappa, &h, &h1, &h2)
            vv[i] = pv + h + 0.5 * eps * s * s
            coeff = p1 * dphi
            if s > 0.0:
                ux = x / s
                uy = y / s
            else:
                ux = 0.0
                uy = 0.0
            hxv[i] = coeff * dgx + h1 * ux + eps * x
            hyv[i] = coeff * dgy + h1 * uy + eps * y
    return out_v, out_hx, out_hy


def cell_hvp(gx, gy, a, px, py, reg):
    """Per-cell Hessian action on direction gradients (px, py).

    Cells within ``boundary_tol`` of the degeneracy boundary contribute only
    the smooth curvature (convexifier + eps lift).
    """
    params, bdarr = _body_matrix(reg)
    cdef double[::1] xs = np.ascontiguousarray(np.ravel(gx), dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(np.ravel(gy), dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(np.ravel(a), dtype=np.float64)
    cdef double[::1] pxs = np.ascontiguousarray(np.ravel(px), dtype=np.float64)
    cdef double[::1] pys = np.ascontiguousarray(np.ravel(py), dtype=np.float64)
    cdef double[:, ::1] bd = bdarr
    cdef int kind = params.body_kind
    cdef int m = bd.shape[0]
    cdef double p = params.p
    cdef double kt = params.k_tilde
    cdef double r0 = params.phi_r0
    cdef double ell = params.phi_ell
    cdef double kappa = params.phi_kappa
    cdef double eps = params.epsilon
    cdef double btol = params.boundary_tol
    cdef Py_ssize_t n = xs.shape[0]

    out_qx = np.empty(n)
    out_qy = np.empty(n)
    cdef double[::1] qxv = out_qx
    cdef double[::1] qyv = out_qy

    cdef Py_ssize_t i
    cdef double x, y, g, dgx, dgy, gm1, f0, dphi, ddphi, pv, p1, p2
    cdef double s, h, h1, h2, ux, uy, dot, tang, qx_, qy_
    cdef double dgdotp, hgx, hgy, hfx, hfy, gfdotp
    with nogil:
        for i in range(n):
            x = xs[i]
            y = ys[i]
            g = _gauge_grad(kind, bd, m, x, y, &dgx, &dgy)
            s = sqrt(x * x + y * y)
            _phi(s, r0, ell, kappa, &h, &h1, &h2)
            if s > 0.0:
                ux = x / s
                uy = y / s
                tang = h1 / s
            else:
                ux = 0.0
                uy = 0.0
                tang = 0.0
            dot = ux * pxs[i] + uy * pys[i]
            qx_ = (h2 - tang) * dot * ux + tang * pxs[i] + eps * pxs[i]
            qy_ = (h2 - tang) * dot * uy + tang * pys[i] + eps * pys[i]
            if fabs(g - 1.0) > btol:
                gm1 = g - 1.0
                f0 = av[i] / p * _pospow(gm1, p)
                dphi = av[i] * _pospow(gm1, p - 1.0)
                ddphi = av[i] * (p - 1.0) * _pospow(gm1, p - 2.0)
                _psi(f0, kt, &pv, &p1, &p2)
                dgdotp = dgx * pxs[i] + dgy * pys[i]
                _gauge_hess_vec(kind, bd, x, y, g, pxs[i], pys[i], &hgx, &hgy)
                hfx = ddphi * dgx * dgdotp + dphi * hgx
                hfy = ddphi * dgy * dgdotp + dphi * hgy
                gfdotp = dphi * dgdotp
                qx_ += p2 * (dphi * dgx) * gfdotp + p1 * hfx
                qy_ += p2 * (dphi * dgy) * gfdotp + p1 * hfy
            qxv[i] = qx_
            qyv[i] = qy_
    return out_qx, out_qy
