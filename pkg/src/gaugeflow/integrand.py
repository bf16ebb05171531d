"""Degenerate integrands and their solver-ready regularization.

The prototype energy density is

    F(x, t, xi) = a(x, t) / p * (gauge(xi) - 1)_+^p ,      p > 1,

flat on the whole degeneracy body (gauge <= 1) and p-growth outside it.  A
direct implicit scheme on F is hopeless: F is unbounded, non-uniformly convex
and its Hessian blows up or vanishes depending on p.  ``build_regularized``
therefore assembles the chain actually handed to the solver:

    1. truncate:    F~ = Psi(F) with a C^2 quintic ramp that freezes F at the
                    working-range level  L = K~ + 1,
    2. convexify:   add a radial C^2 bump Phi supported outside the reachable
                    gradient ball, with curvature floors tied to the sampled
                    Hessian bound C_F of F~,
    3. lift:        add eps |xi|^2 / 2.

The result F^_eps agrees with F + eps|xi|^2/2 on the whole working range
{|xi| <= K + R_E}, grows quadratically, and its flux  H^_eps = grad F^ + eps xi
is monotone with gap eps.  All certified constants are recorded on the result.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bodies import (
    BALL,
    ELLIPSOID,
    POLYTOPE,
    ConvexBody,
    gauge_grad_many,
    gauge_hess_many,
    gauge_many,
)

BOUNDARY_TOL = 1e-9


class BoundaryHessianError(ValueError):
    """Second derivatives requested on the degeneracy boundary, where C^2 fails."""


@dataclass(frozen=True)
class IntegrandSpec:
    """Prototype integrand: body, growth exponent, coefficient field a(x, t).

    ``coeff`` must accept (x, y, t) arrays and broadcast; ``c1 <= a <= c2``
    and ``lipschitz_a`` (Lipschitz constant of a in x) are declared bounds,
    trusted for certified constants and spot-checked during the build.
    """

    body: ConvexBody
    p: float
    coeff: Callable
    c1: float
    c2: float
    lipschitz_a: float = 0.0
    coeff_src: str = ""

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p <= 1.0:
            raise ValueError(f"prototype exponent must satisfy p > 1, got {self.p}")
        if not (0.0 < self.c1 <= self.c2):
            raise ValueError(f"coefficient bounds need 0 < c1 <= c2, got ({self.c1}, {self.c2})")

    def coeff_at(self, x, y, t):
        return np.asarray(self.coeff(np.asarray(x, dtype=float), np.asarray(y, dtype=float), float(t)), dtype=float)


def _pospow(base: np.ndarray, expo: float) -> np.ndarray:
    """(base)_+^expo with the convention 0^0 = 0 (flat inside the body)."""
    pos = base > 0.0
    out = np.zeros_like(base)
    if expo == 0.0:
        out[pos] = 1.0
    else:
        out[pos] = base[pos] ** expo
    return out


def prototype_value(spec: IntegrandSpec, x, t: float, xi) -> float:
    """a(x,t)/p * (gauge(xi) - 1)_+^p."""
    x = np.asarray(x, dtype=float)
    a = float(spec.coeff_at(x[0], x[1], t))
    g = gauge_many(spec.body, np.asarray(xi, dtype=float)[None, :])
    return float(a / spec.p * _pospow(g - 1.0, spec.p)[0])


def prototype_gradient(spec: IntegrandSpec, x, t: float, xi) -> np.ndarray:
    """a(x,t) (gauge(xi) - 1)_+^(p-1) * grad gauge(xi); zero on the body."""
    x = np.asarray(x, dtype=float)
    pt = np.asarray(xi, dtype=float)[None, :]
    a = float(spec.coeff_at(x[0], x[1], t))
    g = gauge_many(spec.body, pt)
    dphi = a * _pospow(g - 1.0, spec.p - 1.0)
    return (dphi[:, None] * gauge_grad_many(spec.body, pt))[0]


def prototype_hessian(spec: IntegrandSpec, x, t: float, xi) -> np.ndarray:
    """Analytic Hessian off the degeneracy boundary.

    Raises BoundaryHessianError within 1e-9 of gauge = 1: the density is not
    twice differentiable there and no one-sided limit is silently substituted.
    """
    x = np.asarray(x, dtype=float)
    pt = np.asarray(xi, dtype=float)[None, :]
    g = gauge_many(spec.body, pt)
    if abs(g[0] - 1.0) <= BOUNDARY_TOL:
        raise BoundaryHessianError(
            f"hessian requested at gauge {g[0]!r}, within {BOUNDARY_TOL} of the degeneracy boundary"
        )
    a = float(spec.coeff_at(x[0], x[1], t))
    return _prototype_hess_many(spec, pt, np.array([a]))[0]


def _prototype_hess_many(spec: IntegrandSpec, pts: np.ndarray, a: np.ndarray) -> np.ndarray:
    g = gauge_many(spec.body, pts)
    dg = gauge_grad_many(spec.body, pts)
    d2g = gauge_hess_many(spec.body, pts)
    dphi = a * _pospow(g - 1.0, spec.p - 1.0)
    ddphi = a * (spec.p - 1.0) * _pospow(g - 1.0, spec.p - 2.0)
    outer = dg[:, :, None] * dg[:, None, :]
    return ddphi[:, None, None] * outer + dphi[:, None, None] * d2g


# ---------------------------------------------------------------------------
# C^2 scalar profiles: quintic truncation ramp and radial convexifier


def psi_eval(s: np.ndarray, k_tilde: float):
    """Truncation profile Psi and two derivatives.

    Identity below k_tilde, constant k_tilde + 1 above, quintic smoothstep on
    the unit-length ramp between (value/slope/curvature matched at both ends).
    """
    s = np.asarray(s, dtype=float)
    u = np.clip(s - k_tilde, 0.0, 1.0)
    w = u + u**3 * (4.0 - 7.0 * u + 3.0 * u * u)
    w1 = 1.0 + u * u * (12.0 - 28.0 * u + 15.0 * u * u)
    w2 = u * (24.0 - 84.0 * u + 60.0 * u * u)
    val = np.where(s <= k_tilde, s, k_tilde + w)
    d1 = np.where(s <= k_tilde, 1.0, np.where(s >= k_tilde + 1.0, 0.0, w1))
    d2 = np.where((s <= k_tilde) | (s >= k_tilde + 1.0), 0.0, w2)
    return val, d1, d2


_PSI_GRID = np.linspace(0.0, 1.0, 20001)
# slope/curvature extrema of the fixed quintic ramp (interval length is 1)
PSI_DERIV_BOUND = float(
    np.max(np.abs(1.0 + _PSI_GRID**2 * (12.0 - 28.0 * _PSI_GRID + 15.0 * _PSI_GRID**2)))
    + np.max(np.abs(_PSI_GRID * (24.0 - 84.0 * _PSI_GRID + 60.0 * _PSI_GRID**2)))
)


def phi_eval(s: np.ndarray, r0: float, ell: float, kappa: float):
    """Radial convexifier profile h(|xi|) and two derivatives.

    Zero through r0, curvature ramped to kappa by a cubic smoothstep over
    [r0, r0 + ell], exactly kappa beyond; C^2 by construction.
    """
    s = np.asarray(s, dtype=float)
    h = np.zeros_like(s)
    h1 = np.zeros_like(s)
    h2 = np.zeros_like(s)
    ramp = (s > r0) & (s < r0 + ell)
    u = (s[ramp] - r0) / ell
    h2[ramp] = kappa * u * u * (3.0 - 2.0 * u)
    h1[ramp] = kappa * ell * u**3 * (1.0 - 0.5 * u)
    h[ramp] = kappa * ell * ell * u**4 * (0.25 - 0.1 * u)
    outer = s >= r0 + ell
    so = s[outer] - r0 - 0.5 * ell
    h2[outer] = kappa
    h1[outer] = kappa * so
    h[outer] = 0.5 * kappa * so * so + kappa * ell * ell / 40.0
    return h, h1, h2


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    """Flat parameter pack consumed by both kernel backends."""

    body_kind: int  # 0 ball, 1 ellipsoid, 2 polytope
    body_data: np.ndarray  # ball: [r]; ellipsoid: Q flattened; polytope: halfplane rows
    p: float
    k_tilde: float
    phi_r0: float
    phi_ell: float
    phi_kappa: float
    epsilon: float
    boundary_tol: float


@dataclass(frozen=True)
class RegularizedIntegrand:
    """Solver-ready integrand F^_eps with its certified constants.

    ``k_tilde``      sup of F over the working gradient range,
    ``trunc_level``  freeze level L = k_tilde + 1,
    ``c_psi``        bound on |Psi'| + |Psi''| over the ramp,
    ``c_f``          inflated sampled Hessian bound of the truncated density,
    ``n_radius``     radius beyond which the truncated density is constant,
    ``phi_*``        radial convexifier parameters (cap 2 c_f + 1 unless the
                     convexity sweep forced a raise, then phi_cap_exceeded),
    ``min_eig_sweep``  worst sampled Hessian eigenvalue of F^ (without eps),
    ``quad_growth``    sampled bound on |H^_eps| / (1 + |xi|).
    """

    spec: IntegrandSpec
    gradient_bound: float
    epsilon: float
    k_tilde: float
    trunc_level: float
    c_psi: float
    c_f: float
    n_radius: float
    phi_r0: float
    phi_ell: float
    phi_kappa: float
    phi_cap_exceeded: bool
    min_eig_sweep: float
    quad_growth: float
    boundary_tol: float = BOUNDARY_TOL

    # -- scalar evaluation ------------------------------------------------

    def _coeff1(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.array([float(self.spec.coeff_at(x[0], x[1], t))])

    def value(self, x, t: float, xi) -> float:
        pt = np.asarray(xi, dtype=float)[None, :]
        v, _, _ = chain_value_flux(self, pt, self._coeff1(x, t))
        return float(v[0])

    def h_epsilon(self, x, t: float, xi) -> np.ndarray:
        """Flux H^_eps(x, t, xi) = grad F^(xi) + eps xi (C^0 everywhere)."""
        pt = np.asarray(xi, dtype=float)[None, :]
        _, hx, hy = chain_value_flux(self, pt, self._coeff1(x, t))
        return np.array([hx[0], hy[0]])

    def hessian(self, x, t: float, xi) -> np.ndarray:
        """Full Hessian of F^_eps (eps lift included); errors on the boundary band."""
        pt = np.asarray(xi, dtype=float)[None, :]
        g = gauge_many(self.spec.body, pt)
        if abs(g[0] - 1.0) <= self.boundary_tol:
            raise BoundaryHessianError(
                f"hessian requested at gauge {g[0]!r}, within {self.boundary_tol} of the degeneracy boundary"
            )
        return chain_hessian(self, pt, self._coeff1(x, t))[0]

    def bilinear_form(self, x, t: float, xi, eta, zeta) -> float:
        """<hess F^(xi) eta, zeta> + eps <eta, zeta>."""
        h = self.hessian(x, t, xi)
        return float(np.asarray(zeta, dtype=float) @ h @ np.asarray(eta, dtype=float))

    def with_epsilon(self, epsilon: float) -> "RegularizedIntegrand":
        """Copy at a different quadratic-lift strength (eps = 0 allowed here,
        e.g. to evaluate the purely degenerate flux)."""
        if epsilon < 0.0 or epsilon > 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        return dataclasses.replace(self, epsilon=float(epsilon))

    def kernel_params(regularized) -> KernelParams:
        body = regularized.spec.body
        if body.kind == BALL:
            kind, data = 0, np.array([body.radius])
        elif body.kind == ELLIPSOID:
            kind, data = 1, body.matrix.ravel().copy()
        else:
            kind, data = 2, body.halfplanes.copy()
        return KernelParams(
            body_kind=kind,
            body_data=data,
            p=regularized.spec.p,
            k_tilde=regularized.k_tilde,
            phi_r0=regularized.phi_r0,
            phi_ell=regularized.phi_ell,
            phi_kappa=regularized.phi_kappa,
            epsilon=regularized.epsilon,
            boundary_tol=regularized.boundary_tol,
        )


# reference vectorized chain; the compiled backend mirrors these formulas


def chain_value_flux(reg: RegularizedIntegrand, pts: np.ndarray, a: np.ndarray):
    """Per-point F^_eps and flux components over (n, 2) points with coefficient a."""
    spec = reg.spec
    pts = np.asarray(pts, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), (pts.shape[0],))
    s = np.hypot(pts[:, 0], pts[:, 1])
    g = gauge_many(spec.body, pts)
    gm1 = g - 1.0
    f0 = a / spec.p * _pospow(gm1, spec.p)
    dphi = a * _pospow(gm1, spec.p - 1.0)
    dg = gauge_grad_many(spec.body, pts)
    psi, p1, _ = psi_eval(f0, reg.k_tilde)
    h, h1, _ = phi_eval(s, reg.phi_r0, reg.phi_ell, reg.phi_kappa)
    value = psi + h + 0.5 * reg.epsilon * s * s
    coeff = p1 * dphi
    unit = np.zeros_like(pts)
    nz = s > 0.0
    unit[nz] = pts[nz] / s[nz, None]
    hx = coeff * dg[:, 0] + h1 * unit[:, 0] + reg.epsilon * pts[:, 0]
    hy = coeff * dg[:, 1] + h1 * unit[:, 1] + reg.epsilon * pts[:, 1]
    return value, hx, hy


def chain_hessian(reg: RegularizedIntegrand, pts: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Per-point Hessian of F^_eps, shape (n, 2, 2); a.e. formulas, no band guard."""
    spec = reg.spec
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[0]
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    s = np.hypot(pts[:, 0], pts[:, 1])
    g = gauge_many(spec.body, pts)
    gm1 = g - 1.0
    f0 = a / spec.p * _pospow(gm1, spec.p)
    dphi = a * _pospow(gm1, spec.p - 1.0)
    dg = gauge_grad_many(spec.body, pts)
    gradf = dphi[:, None] * dg
    hessf = _prototype_hess_many(spec, pts, a)
    _, p1, p2 = psi_eval(f0, reg.k_tilde)
    hess = (
        p2[:, None, None] * gradf[:, :, None] * gradf[:, None, :]
        + p1[:, None, None] * hessf
    )
    _, h1, h2 = phi_eval(s, reg.phi_r0, reg.phi_ell, reg.phi_kappa)
    nz = s > 0.0
    unit = np.zeros_like(pts)
    unit[nz] = pts[nz] / s[nz, None]
    uu = unit[:, :, None] * unit[:, None, :]
    tang = np.zeros_like(s)
    tang[nz] = h1[nz] / s[nz]
    eye = np.eye(2)[None, :, :]
    hess += h2[:, None, None] * uu + tang[:, None, None] * (eye - uu)
    hess += reg.epsilon * eye
    return hess


# ---------------------------------------------------------------------------


def build_regularized(
    spec: IntegrandSpec,
    gradient_bound: float,
    epsilon: float,
    sweep_seed: int = 0,
) -> RegularizedIntegrand:
    """Assemble the truncated, convexified, eps-lifted integrand.

    ``gradient_bound`` is the a-priori sup of |grad u| the solve is trusted to
    stay under (from config or a coarse pre-solve); epsilon must lie in (0, 1].
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not np.isfinite(gradient_bound) or gradient_bound < 0.0:
        raise ValueError(f"gradient bound must be finite and >= 0, got {gradient_bound}")

    body = spec.body
    r_e, big_r = body.r_inner, body.r_outer
    k = float(gradient_bound)

    # sup of F over the working range |xi| <= K + 2 R_E (gauge sandwich is sharp)
    k_tilde = spec.c2 / spec.p * max((k + 2.0 * big_r) / r_e - 1.0, 0.0) ** spec.p
    level = k_tilde + 1.0

    # radius past which the truncated density is constant: closed-form seed,
    # then verify on a sampled sphere and double until it certifies
    n_radius = max(k + 2.0 * big_r, big_r * (1.0 + (spec.p * level / spec.c1) ** (1.0 / spec.p)))
    n_radius *= 1.0 + 1e-9
    ang = np.linspace(0.0, 2.0 * np.pi, 128, endpoint=False)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for _ in range(80):
        gmin = gauge_many(body, n_radius * dirs)
        fmin = spec.c1 / spec.p * _pospow(gmin - 1.0, spec.p)
        if np.min(fmin) >= level:
            break
        n_radius *= 2.0
    else:
        raise RuntimeError("could not certify a constancy radius for the truncated density")

    c_f = _sample_cf(spec, k_tilde, k + r_e, n_radius)
    phi_r0 = k + big_r
    phi_ell = 0.2 * big_r
    phi_kappa = 2.0 * c_f + 1.0

    reg = RegularizedIntegrand(
        spec=spec,
        gradient_bound=k,
        epsilon=float(epsilon),
        k_tilde=k_tilde,
        trunc_level=level,
        c_psi=PSI_DERIV_BOUND,
        c_f=c_f,
        n_radius=n_radius,
        phi_r0=phi_r0,
        phi_ell=phi_ell,
        phi_kappa=phi_kappa,
        phi_cap_exceeded=False,
        min_eig_sweep=np.nan,
        quad_growth=np.nan,
    )

    min_eig = _convexity_sweep(reg)
    if min_eig < -1e-9:
        # the stated curvature cap 2 c_f + 1 cannot always buy convexity for
        # anisotropic bodies; raise the ramp level and record the breach
        kappa_safe = 1.01 * max(phi_kappa, (c_f + 1.0) * (k + 2.0 * big_r) / (0.9 * big_r))
        reg = dataclasses.replace(reg, phi_kappa=kappa_safe, phi_cap_exceeded=True)
        min_eig = _convexity_sweep(reg)

    quad = _quad_growth_sweep(reg)
    return dataclasses.replace(reg, min_eig_sweep=min_eig, quad_growth=quad)


def _sample_cf(spec: IntegrandSpec, k_tilde: float, r_from: float, r_to: float) -> float:
    """Sampled sup of ||hess Psi(F)|| on the annulus, inflated 1.5x, floored at 1."""
    radii_grid = np.linspace(r_from, r_to, 100)
    ang = np.linspace(0.0, 2.0 * np.pi, 100, endpoint=False)
    pts = np.concatenate(
        [
            (radii_grid[:, None] * np.cos(ang)[None, :]).reshape(-1, 1),
            (radii_grid[:, None] * np.sin(ang)[None, :]).reshape(-1, 1),
        ],
        axis=1,
    )
    worst = 0.0
    for a in np.linspace(spec.c1, spec.c2, 9):
        avec = np.full(pts.shape[0], a)
        g = gauge_many(spec.body, pts)
        f0 = a / spec.p * _pospow(g - 1.0, spec.p)
        dphi = a * _pospow(g - 1.0, spec.p - 1.0)
        dg = gauge_grad_many(spec.body, pts)
        gradf = dphi[:, None] * dg
        hessf = _prototype_hess_many(spec, pts, avec)
        _, p1, p2 = psi_eval(f0, k_tilde)
        h = (
            p2[:, None, None] * gradf[:, :, None] * gradf[:, None, :]
            + p1[:, None, None] * hessf
        )
        worst = max(worst, float(np.max(_spectral_norm_2x2(h))))
    return max(1.5 * worst, 1.0)


def _spectral_norm_2x2(h: np.ndarray) -> np.ndarray:
    half_tr = 0.5 * (h[:, 0, 0] + h[:, 1, 1])
    disc = np.sqrt(np.maximum(0.25 * (h[:, 0, 0] - h[:, 1, 1]) ** 2 + h[:, 0, 1] ** 2, 0.0))
    return np.maximum(np.abs(half_tr + disc), np.abs(half_tr - disc))


def _min_eig_2x2(h: np.ndarray) -> np.ndarray:
    half_tr = 0.5 * (h[:, 0, 0] + h[:, 1, 1])
    disc = np.sqrt(np.maximum(0.25 * (h[:, 0, 0] - h[:, 1, 1]) ** 2 + h[:, 0, 1] ** 2, 0.0))
    return half_tr - disc


def _convexity_sweep(reg: RegularizedIntegrand) -> float:
    """Worst Hessian eigenvalue of F^ (eps stripped) off the boundary band."""
    spec = reg.spec
    radii_grid = np.linspace(1e-3, 1.2 * reg.n_radius, 160)
    ang = np.linspace(0.0, 2.0 * np.pi, 96, endpoint=False)
    pts = np.concatenate(
        [
            (radii_grid[:, None] * np.cos(ang)[None, :]).reshape(-1, 1),
            (radii_grid[:, None] * np.sin(ang)[None, :]).reshape(-1, 1),
        ],
        axis=1,
    )
    g = gauge_many(spec.body, pts)
    pts = pts[np.abs(g - 1.0) > 1e-6]
    bare = dataclasses.replace(reg, epsilon=0.0)
    worst = np.inf
    for a in np.linspace(spec.c1, spec.c2, 5):
        h = chain_hessian(bare, pts, np.full(pts.shape[0], a))
        worst = min(worst, float(np.min(_min_eig_2x2(h))))
    return worst


def _quad_growth_sweep(reg: RegularizedIntegrand) -> float:
    radii_grid = np.linspace(0.0, 10.0 * reg.n_radius, 400)
    ang = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    pts = np.concatenate(
        [
            (radii_grid[:, None] * np.cos(ang)[None, :]).reshape(-1, 1),
            (radii_grid[:, None] * np.sin(ang)[None, :]).reshape(-1, 1),
        ],
        axis=1,
    )
    worst = 0.0
    for a in (reg.spec.c1, reg.spec.c2):
        _, hx, hy = chain_value_flux(reg, pts, np.full(pts.shape[0], a))
        ratio = np.hypot(hx, hy) / (1.0 + np.hypot(pts[:, 0], pts[:, 1]))
        worst = max(worst, float(np.max(ratio)))
    return worst
