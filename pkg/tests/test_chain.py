"""Regularized chain: construction constants, smoothness, convexity bounds.

Derivative oracles are central differences of the chain value and flux;
the identity-region claim is checked bitwise against the raw prototype.
"""

import numpy as np
import pytest

from gaugeflow.bodies import ball, ellipsoid, gauge, polytope
from gaugeflow.expressions import compile_expression
from gaugeflow.integrand import (
    IntegrandSpec,
    build_regularized,
    chain_hessian,
    chain_value_flux,
    phi_eval,
    prototype_value,
    psi_eval,
)

X0 = np.array([0.4, 0.6])


@pytest.fixture(scope="module")
def reg_ball():
    spec = IntegrandSpec(body=ball(1.0), p=2.0,
                         coeff=compile_expression("1"), c1=0.5, c2=2.0)
    return build_regularized(spec, gradient_bound=2.0, epsilon=0.01)


@pytest.fixture(scope="module")
def reg_ell():
    spec = IntegrandSpec(body=ellipsoid(np.array([[0.25, 0.0], [0.0, 1.0]])),
                         p=3.0, coeff=compile_expression("1 + 0.25*x"),
                         c1=0.5, c2=2.0)
    return build_regularized(spec, gradient_bound=1.5, epsilon=0.05)


def test_construction_constants(reg_ball):
    # ball(1): r_inner = r_outer = 1, so the truncation threshold is
    # c2/p * ((K + 2R)/r - 1)^p = (2/2) * (4/1 - 1)^2 = 9
    assert reg_ball.k_tilde == pytest.approx(9.0, abs=1e-12)
    assert reg_ball.trunc_level == pytest.approx(10.0, abs=1e-12)
    assert reg_ball.phi_r0 == pytest.approx(3.0, abs=1e-12)  # K + R
    assert reg_ball.phi_ell == pytest.approx(0.2, abs=1e-12)  # 0.2 R
    if not reg_ball.phi_cap_exceeded:
        assert reg_ball.phi_kappa == pytest.approx(2.0 * reg_ball.c_f + 1.0,
                                                   rel=1e-12)
    # the sweep covers the degenerate region, so zero is the honest floor
    assert reg_ball.min_eig_sweep >= 0.0
    assert reg_ball.n_radius >= 4.0


def test_construction_rejects_bad_epsilon():
    spec = IntegrandSpec(body=ball(1.0), p=2.0,
                         coeff=compile_expression("1"), c1=0.5, c2=2.0)
    for bad in (0.0, -0.1, 1.5, np.inf):
        with pytest.raises(ValueError):
            build_regularized(spec, 2.0, bad)
    with pytest.raises(ValueError):
        build_regularized(spec, -1.0, 0.1)


def test_psi_profile_shape():
    k = 3.0
    s = np.array([0.0, 1.0, 3.0, 3.5, 4.0, 7.0])
    val, d1, d2 = psi_eval(s, k)
    assert np.array_equal(val[:3], s[:3])  # identity branch bitwise
    assert val[-2] == pytest.approx(4.0, abs=1e-12)
    assert val[-1] == pytest.approx(4.0, abs=1e-12)
    assert d1[0] == 1.0 and d1[-1] == 0.0
    assert np.all(d1 >= 0.0)
    # C^1 join at both ramp ends
    for edge in (3.0, 4.0):
        lo, hi = psi_eval(np.array([edge - 1e-7, edge + 1e-7]), k)[1]
        assert hi == pytest.approx(lo, abs=1e-5)


def test_phi_profile_shape():
    r0, ell, kappa = 3.0, 0.2, 5.0
    s = np.array([0.0, 2.9, 3.0, 3.1, 3.2, 4.0])
    h, h1, h2 = phi_eval(s, r0, ell, kappa)
    assert np.all(h[:3] == 0.0) and np.all(h1[:3] == 0.0)
    assert h2[-1] == kappa
    assert h2[3] == pytest.approx(kappa * 0.5, abs=1e-12)  # midpoint of ramp
    # FD consistency of the two derivative channels
    grid = np.linspace(2.8, 4.2, 141)
    hh, hh1, hh2 = phi_eval(grid, r0, ell, kappa)
    fd1 = np.gradient(hh, grid)
    assert np.max(np.abs(fd1[3:-3] - hh1[3:-3])) < 5e-3


def test_identity_region_bitwise(reg_ball):
    # below the truncation threshold the chain is the raw prototype plus the
    # exact quadratic lift; sampled well inside |xi| < K + R_E
    rng = np.random.default_rng(7)
    n = 400
    s = np.sqrt(rng.uniform(0.0, 1.0, n)) * 2.8
    th = rng.uniform(0, 2 * np.pi, n)
    pts = np.stack([s * np.cos(th), s * np.sin(th)], axis=1)
    a = np.ones(n)
    val, _, _ = chain_value_flux(reg_ball, pts, a)
    # same float path as the chain: hypot first, then the half-square
    r = np.hypot(pts[:, 0], pts[:, 1])
    lift = 0.5 * reg_ball.epsilon * r * r
    for i in range(n):
        raw = prototype_value(reg_ball.spec, X0, 0.0, pts[i])
        assert val[i] == raw + lift[i]


def test_scalar_methods_match_vectorized(reg_ell):
    rng = np.random.default_rng(8)
    pts = rng.normal(0.0, 3.0, (40, 2))
    t = 0.45
    a = np.array([float(reg_ell.spec.coeff_at(X0[0], X0[1], t))] * 40)
    val, fx, fy = chain_value_flux(reg_ell, pts, a)
    for i in range(40):
        assert reg_ell.value(X0, t, pts[i]) == val[i]
        hv = reg_ell.h_epsilon(X0, t, pts[i])
        assert hv[0] == fx[i] and hv[1] == fy[i]


def test_flux_is_gradient_of_value(reg_ell):
    rng = np.random.default_rng(9)
    h = 1e-5
    for _ in range(50):
        xi = rng.normal(0.0, 2.5, 2)
        # keep clear of the gauge-1 kink band where FD straddles the fold
        if abs(gauge(reg_ell.spec.body, xi) - 1.0) < 0.05:
            continue
        a = np.array([1.2])
        fd = np.empty(2)
        for axis in range(2):
            dq = np.zeros(2)
            dq[axis] = h
            vp, _, _ = chain_value_flux(reg_ell, (xi + dq)[None, :], a)
            vm, _, _ = chain_value_flux(reg_ell, (xi - dq)[None, :], a)
            fd[axis] = (vp[0] - vm[0]) / (2 * h)
        _, fx, fy = chain_value_flux(reg_ell, xi[None, :], a)
        assert np.hypot(fd[0] - fx[0], fd[1] - fy[0]) < 2e-7 * (1 + abs(fx[0]) + abs(fy[0]))


def test_hessian_matches_flux_fd(reg_ball):
    rng = np.random.default_rng(10)
    h = 1e-5
    count = 0
    while count < 30:
        xi = rng.normal(0.0, 2.0, 2)
        g = gauge(reg_ball.spec.body, xi)
        if abs(g - 1.0) < 0.05:
            continue
        count += 1
        a = np.array([1.0])
        hess = chain_hessian(reg_ball, xi[None, :], a)[0]
        for axis in range(2):
            dq = np.zeros(2)
            dq[axis] = h
            _, fxp, fyp = chain_value_flux(reg_ball, (xi + dq)[None, :], a)
            _, fxm, fym = chain_value_flux(reg_ball, (xi - dq)[None, :], a)
            col = np.array([(fxp[0] - fxm[0]) / (2 * h),
                            (fyp[0] - fym[0]) / (2 * h)])
            assert np.max(np.abs(col - hess[:, axis])) < 5e-6 * (1 + np.max(np.abs(hess)))


def test_epsilon_lift_is_additive(reg_ball):
    rng = np.random.default_rng(11)
    pts = rng.normal(0.0, 3.0, (60, 2))
    a = np.ones(60)
    base = reg_ball.with_epsilon(0.0)
    h0 = chain_hessian(base, pts, a)
    h1 = chain_hessian(reg_ball, pts, a)
    shift = h1 - h0
    assert np.allclose(shift[:, 0, 0], reg_ball.epsilon, atol=0.0)
    assert np.allclose(shift[:, 1, 1], reg_ball.epsilon, atol=0.0)
    assert np.all(shift[:, 0, 1] == 0.0)


def test_strict_monotonicity(reg_ball):
    # <H_eps(xi) - H_eps(eta), xi - eta> >= eps |xi - eta|^2, the working
    # ellipticity floor the solver's line search relies on
    rng = np.random.default_rng(12)
    a = np.array([1.0, 1.0])
    eps = reg_ball.epsilon
    for _ in range(300):
        pair = rng.normal(0.0, 4.0, (2, 2))
        _, fx, fy = chain_value_flux(reg_ball, pair, a)
        d = pair[0] - pair[1]
        gap = (fx[0] - fx[1]) * d[0] + (fy[0] - fy[1]) * d[1]
        assert gap >= eps * (d @ d) - 1e-10 * (1 + d @ d)


def test_linear_flux_growth(reg_ball):
    # past n_radius the truncated part is frozen so the flux is the radial
    # convexifier plus the eps lift: |H_eps(xi)| <= (kappa + eps)(1 + |xi|)
    rng = np.random.default_rng(13)
    s = 10.0 ** rng.uniform(0, 3, 100) * reg_ball.n_radius
    th = rng.uniform(0, 2 * np.pi, 100)
    pts = np.stack([s * np.cos(th), s * np.sin(th)], axis=1)
    _, fx, fy = chain_value_flux(reg_ball, pts, np.ones(100))
    mag = np.hypot(fx, fy)
    assert np.all(mag <= (reg_ball.phi_kappa + reg_ball.epsilon) * (1.0 + s))
    # and the sampled growth constant is honest on the range it was swept over
    assert reg_ball.quad_growth < reg_ball.phi_kappa + reg_ball.epsilon


def test_polytope_chain_smoke():
    verts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    spec = IntegrandSpec(body=polytope(verts), p=2.0,
                         coeff=compile_expression("1"), c1=0.5, c2=2.0)
    reg = build_regularized(spec, 1.0, 0.1)
    pts = np.array([[0.2, 0.1], [3.0, 0.0], [0.0, -5.0]])
    val, fx, fy = chain_value_flux(reg, pts, np.ones(3))
    assert np.all(np.isfinite(val)) and np.all(np.isfinite(fx))
    assert val[0] == pytest.approx(0.5 * 0.1 * 0.05, rel=1e-12)  # pure lift inside


def test_with_epsilon_bounds(reg_ball):
    assert reg_ball.with_epsilon(0.0).epsilon == 0.0
    assert reg_ball.with_epsilon(1.0).epsilon == 1.0
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            reg_ball.with_epsilon(bad)
