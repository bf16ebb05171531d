"""Pure-NumPy kernel backend (reference implementation).

Wraps the vectorized chain formulas from the integrand module into the two
per-cell operations the solver's inner loop needs.  The compiled backend
mirrors exactly these formulas; a consistency test keeps the two glued.
"""

from __future__ import annotations

import numpy as np

from ..bodies import gauge_many
from ..integrand import chain_hessian, chain_value_flux, phi_eval

NAME = "numpy"


def cell_energy_flux(gx, gy, a, reg):
    """Per-cell integrand value and flux components for gradient rows (gx, gy)."""
    pts = np.stack([np.ravel(gx), np.ravel(gy)], axis=1)
    return chain_value_flux(reg, pts, np.ravel(a))


def cell_hvp(gx, gy, a, px, py, reg):
    """Per-cell Hessian action on direction gradients (px, py).

    Cells whose gradient sits within ``reg.boundary_tol`` of the degeneracy
    boundary contribute only the smooth curvature (convexifier + eps lift):
    the truncated density is not twice differentiable there.
    """
    pts = np.stack([np.ravel(gx), np.ravel(gy)], axis=1)
    pvec = np.stack([np.ravel(px), np.ravel(py)], axis=1)
    hess = chain_hessian(reg, pts, np.ravel(a))
    q = np.einsum("nij,nj->ni", hess, pvec)

    g = gauge_many(reg.spec.body, pts)
    band = np.abs(g - 1.0) <= reg.boundary_tol
    if np.any(band):
        bpts = pts[band]
        s = np.hypot(bpts[:, 0], bpts[:, 1])
        _, h1, h2 = phi_eval(s, reg.phi_r0, reg.phi_ell, reg.phi_kappa)
        unit = np.zeros_like(bpts)
        nz = s > 0.0
        unit[nz] = bpts[nz] / s[nz, None]
        dot = np.einsum("ni,ni->n", unit, pvec[band])
        tang = np.zeros_like(s)
        tang[nz] = h1[nz] / s[nz]
        q[band] = (
            (h2 - tang)[:, None] * dot[:, None] * unit
            + tang[:, None] * pvec[band]
            + reg.epsilon * pvec[band]
        )
    return q[:, 0], q[:, 1]
