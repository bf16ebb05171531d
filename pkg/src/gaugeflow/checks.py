"""Executable certificate suites behind ``gaugeflow verify``.

Every suite returns a list of CheckResult rows and ``run_all`` stitches them
together from an experiment config (seed, body, solver parameters).  The
suites take explicit sample counts and tolerances so the test suite can rerun
them at its own settings; inequality checks report the worst violation rather
than a bare boolean so failures are diagnosable from the ledger alone.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    Cylinder,
    _cylinder_cells,
    absorption_iteration,
    classify_regime,
    continuity_modulus,
    eps_convergence_table,
    excess,
    geometric_convergence,
    superlevel_measure,
)
from .bodies import (
    POLYTOPE,
    ball,
    ellipsoid,
    gauge_grad_many,
    gauge_many,
    polytope,
    sample_dual_boundary,
)
from .config import ConfigError, ExperimentConfig
from .expressions import compile_expression
from .gmaps import GDeltaMap
from .grid import Grid, GridField, cell_gradients, l2_cell_norm
from .integrand import (
    IntegrandSpec,
    _pospow,
    _prototype_hess_many,
    _spectral_norm_2x2,
    build_regularized,
    chain_value_flux,
    prototype_gradient,
    prototype_value,
)
from .solver import (
    discrete_energy,
    make_space_time_bump,
    solve,
    steklov_average,
    weak_residual,
)

# epsilon sweep used by the uniform-energy and Cauchy certificates
UNIFORM_SWEEP = (1.0, 0.3, 0.1, 0.03, 0.01)

PENTAGON_VERTICES = np.array(
    [[1.2, 0.0], [0.3, 1.1], [-1.0, 0.6], [-0.8, -0.7], [0.4, -1.0]]
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def standard_bodies() -> dict:
    """The four reference bodies used by the certificate and test suites."""
    return {
        "ball": ball(1.0),
        "ellipsoid": ellipsoid(np.array([[0.25, 0.0], [0.0, 1.0]])),
        "square": polytope(np.array([[1.0, 1.0], [-1.0, 1.0],
                                     [-1.0, -1.0], [1.0, -1.0]])),
        "pentagon": polytope(PENTAGON_VERTICES),
    }


def _bound(name: str, violation, tol: float, note: str = "") -> CheckResult:
    """Check max(violation) <= tol; violation rows are lhs - rhs."""
    arr = np.asarray(violation, dtype=float)
    worst = float(np.max(arr)) if arr.size else float("-inf")
    detail = f"max violation {worst:.3e} vs tol {tol:.1e} over {arr.size} samples"
    if note:
        detail += f"; {note}"
    return CheckResult(name, bool(worst <= tol), detail)


def _sample_vectors(rng, n: int, lo: float = -2.0, hi: float = 0.5) -> np.ndarray:
    """Random directions with log-uniform magnitudes 10^[lo, hi]."""
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    mag = 10.0 ** rng.uniform(lo, hi, n)
    return np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)


def _smooth_mask(body, pts: np.ndarray) -> np.ndarray:
    """Points where the gauge is differentiable with a safety margin.

    Polytope gauges lose C^1 along facet-transition rays; finite-difference
    probes must not straddle them.  Balls and ellipsoids are smooth off 0.
    """
    norms = np.hypot(pts[:, 0], pts[:, 1])
    if body.kind != POLYTOPE:
        return norms > 1e-8
    vals = pts @ body.halfplanes.T
    part = np.partition(vals, vals.shape[1] - 2, axis=1)
    gap = part[:, -1] - part[:, -2]
    return (norms > 1e-8) & (gap > 1e-3 * np.maximum(part[:, -1], 1e-30))


# ---------------------------------------------------------------------------
# gauge axioms


def gauge_suite(label: str, body, rng, n: int = 10000, tol: float = 1e-10,
                tol_algebraic: float = 1e-9, dual_count: int = 10000,
                dual_rel: float = 0.01) -> list:
    r_in, r_out = body.r_inner, body.r_outer
    xi = _sample_vectors(rng, n)
    eta = _sample_vectors(rng, n)
    g_xi = gauge_many(body, xi)
    g_eta = gauge_many(body, eta)
    out = []

    lam = 10.0 ** rng.uniform(-0.5, 0.5, n)
    viol = np.abs(gauge_many(body, lam[:, None] * xi) - lam * g_xi)
    out.append(_bound(f"gauge[{label}].homogeneity", viol, tol))

    viol = gauge_many(body, xi + eta) - (g_xi + g_eta)
    out.append(_bound(f"gauge[{label}].triangle", viol, tol))

    viol = np.abs(g_xi - g_eta) - np.maximum(gauge_many(body, xi - eta),
                                             gauge_many(body, eta - xi))
    out.append(_bound(f"gauge[{label}].reverse_triangle", viol, tol))

    dist = np.hypot(xi[:, 0] - eta[:, 0], xi[:, 1] - eta[:, 1])
    viol = np.abs(g_xi - g_eta) - dist / r_in
    out.append(_bound(f"gauge[{label}].lipschitz", viol, tol))

    norm_xi = np.hypot(xi[:, 0], xi[:, 1])
    viol = np.maximum(norm_xi / r_out - g_xi, g_xi - norm_xi / r_in)
    out.append(_bound(f"gauge[{label}].radii_sandwich", viol, tol))

    lhs = gauge_many(body, xi / g_xi[:, None] - eta / g_eta[:, None])
    rhs = (r_out / r_in) * (2.0 / g_xi) * gauge_many(body, xi - eta)
    out.append(_bound(f"gauge[{label}].algebraic", lhs - rhs, tol_algebraic))

    dual = sample_dual_boundary(body, dual_count)
    probe = _sample_vectors(rng, 2000)
    g_probe = gauge_many(body, probe)
    approx = np.empty(probe.shape[0])
    for i in range(0, probe.shape[0], 200):
        approx[i:i + 200] = np.max(probe[i:i + 200] @ dual.points.T, axis=1)
    viol = np.abs(approx - g_probe) / g_probe - dual_rel
    out.append(_bound(f"gauge[{label}].duality", viol, 0.0,
                      note=f"{dual_count} polar samples, rel tol {dual_rel}"))
    return out


# ---------------------------------------------------------------------------
# truncation maps


def gmap_suite(label: str, body, deltas, rng, n: int = 10000,
               tol_forward: float = 1e-10, tol_inverse: float = 1e-9,
               tol_collapse: float = 1e-9, include_collapse: bool = True) -> list:
    out = []
    base = GDeltaMap(body, 0.0)
    for delta in deltas:
        tag = f"gmap[{label}][delta={delta:g}]"
        m = GDeltaMap(body, float(delta))
        xi = _sample_vectors(rng, n, -2.0, 1.0)
        eta = _sample_vectors(rng, n, -2.0, 1.0)
        gxi = m.apply_many(xi)
        geta = m.apply_many(eta)

        dist = np.hypot(xi[:, 0] - eta[:, 0], xi[:, 1] - eta[:, 1])
        viol = np.hypot(gxi[:, 0] - geta[:, 0], gxi[:, 1] - geta[:, 1]) \
            - m.forward_lipschitz_bound() * dist
        out.append(_bound(f"{tag}.forward_lipschitz", viol, tol_forward,
                          note=f"constant {m.forward_lipschitz_bound():.6g}"))

        # outside points: gauge pushed to (1+delta)*(1 + 10^[-3, 1])
        scale = (1.0 + delta) * (1.0 + 10.0 ** rng.uniform(-3.0, 1.0, n))
        xi_out = xi * (scale / gauge_many(body, xi))[:, None]
        b_out = base.apply_many(xi_out)
        b_eta = base.apply_many(eta)
        viol = np.hypot(xi_out[:, 0] - eta[:, 0], xi_out[:, 1] - eta[:, 1]) \
            - m.inverse_lipschitz_bound() * np.hypot(b_out[:, 0] - b_eta[:, 0],
                                                     b_out[:, 1] - b_eta[:, 1])
        out.append(_bound(f"{tag}.inverse_lipschitz", viol, tol_inverse,
                          note=f"constant {m.inverse_lipschitz_bound():.6g}"))

        m2 = GDeltaMap(body, 2.0 * float(delta))
        g2 = m2.apply_many(xi)
        viol = np.hypot(g2[:, 0], g2[:, 1]) - np.hypot(gxi[:, 0], gxi[:, 1])
        out.append(_bound(f"{tag}.monotone_family", viol, 0.0))

        if include_collapse:
            b0 = base.apply_many(xi)
            viol = np.hypot(gxi[:, 0] - b0[:, 0], gxi[:, 1] - b0[:, 1]) \
                - m.collapse_bound()
            out.append(_bound(f"{tag}.delta_collapse", viol, tol_collapse,
                              note=f"stated bound {m.collapse_bound():.6g}"))
    return out


# ---------------------------------------------------------------------------
# prototype integrand


def prototype_suite(rng, p_values=(2.0, 3.0, 4.0), c1: float = 0.5,
                    c2: float = 2.0, n: int = 10000,
                    tol_sandwich: float = 1e-8, tol_hess_fd: float = 1e-5,
                    tol_grad_fd: float = 1e-6) -> list:
    """Euclidean-ball prototype: Hessian sandwich plus derivative certificates.

    The Rayleigh-quotient sandwich is only claimed for the ball body with
    p >= 2; the derivative and convexity checks hold for every p > 1.
    """
    body = ball(1.0)
    out = []
    for p in p_values:
        p = float(p)
        spec = IntegrandSpec(body=body, p=p, coeff=compile_expression("1"),
                             c1=c1, c2=c2)
        tag = f"prototype[p={p:g}]"
        a = rng.uniform(c1, c2, n)
        s = 1.0 + 10.0 ** rng.uniform(-3.0, np.log10(9.0), n)
        ang = rng.uniform(0.0, 2.0 * np.pi, n)
        pts = np.stack([s * np.cos(ang), s * np.sin(ang)], axis=1)

        def value_of(q, coeffs=a, expo=p):
            gq = gauge_many(body, q)
            return coeffs / expo * _pospow(gq - 1.0, expo)

        def grad_of(q, coeffs=a, expo=p):
            gq = gauge_many(body, q)
            return (coeffs * _pospow(gq - 1.0, expo - 1.0))[:, None] \
                * gauge_grad_many(body, q)

        if p >= 2.0:
            hess = _prototype_hess_many(spec, pts, a)
            u_ang = rng.uniform(0.0, 2.0 * np.pi, n)
            u = np.stack([np.cos(u_ang), np.sin(u_ang)], axis=1)
            rq = np.einsum("ni,nij,nj->n", u, hess, u)
            lower = c1 * _pospow(s - 1.0, p - 1.0) / s
            upper = c2 * (p - 1.0) * _pospow(s - 1.0, p - 2.0)
            viol = np.maximum(lower - rq, rq - upper)
            out.append(_bound(f"{tag}.hessian_sandwich", viol, tol_sandwich))

            step = 1e-6 * (1.0 + s)
            h_fd = np.empty_like(hess)
            for axis in range(2):
                dq = np.zeros_like(pts)
                dq[:, axis] = step
                h_fd[:, :, axis] = (grad_of(pts + dq) - grad_of(pts - dq)) \
                    / (2.0 * step[:, None])
            err = np.max(np.abs(h_fd - hess), axis=(1, 2))
            viol = err - tol_hess_fd * (1.0 + _spectral_norm_2x2(hess))
            out.append(_bound(f"{tag}.hessian_fd", viol, 0.0,
                              note=f"rel tol {tol_hess_fd}"))
        else:
            out.append(CheckResult(
                f"{tag}.hessian_sandwich", True,
                "skipped: sandwich bounds only claimed for p >= 2"))

        step = 1e-6 * (1.0 + s)
        g_an = grad_of(pts)
        fd = np.empty_like(g_an)
        for axis in range(2):
            dq = np.zeros_like(pts)
            dq[:, axis] = step
            fd[:, axis] = (value_of(pts + dq) - value_of(pts - dq)) \
                / (2.0 * step)
        err = np.hypot(fd[:, 0] - g_an[:, 0], fd[:, 1] - g_an[:, 1])
        viol = err - tol_grad_fd * (1.0 + np.hypot(g_an[:, 0], g_an[:, 1]))
        out.append(_bound(f"{tag}.gradient_fd", viol, 0.0,
                          note=f"rel tol {tol_grad_fd}"))

        inside = pts * (rng.uniform(0.0, 1.0, n) ** 0.5 / s)[:, None]
        keep = gauge_many(body, inside) <= 1.0
        vals_in = value_of(inside)[keep]
        out.append(CheckResult(
            f"{tag}.zero_on_body", bool(np.all(vals_in == 0.0)),
            f"{int(keep.sum())} interior samples, max {float(np.max(vals_in, initial=0.0)):.1e}"))

        xi2 = _sample_vectors(rng, n, -1.0, 1.0)
        viol = value_of(0.5 * (pts + xi2)) \
            - 0.5 * (value_of(pts) + value_of(xi2))
        out.append(_bound(f"{tag}.midpoint_convexity", viol, 1e-12))

        # wiring: the vectorized formulas above against the scalar operations
        worst = 0.0
        x_spot = np.array([0.3, 0.4])
        ones = np.ones(1)
        for i in rng.integers(0, n, 40):
            q = pts[i][None, :]
            v_ref = float(value_of(q, coeffs=ones)[0])
            g_ref = grad_of(q, coeffs=ones)[0]
            worst = max(worst,
                        abs(prototype_value(spec, x_spot, 0.0, pts[i]) - v_ref),
                        float(np.max(np.abs(
                            prototype_gradient(spec, x_spot, 0.0, pts[i]) - g_ref))))
        out.append(CheckResult(f"{tag}.scalar_agreement", worst <= 1e-10,
                               f"max deviation {worst:.1e} on 40 spot checks"))
    return out


# ---------------------------------------------------------------------------
# regularization chain


def chain_suite(reg, rng, n: int = 10000, label: str = "chain") -> list:
    spec = reg.spec
    body = spec.body
    out = []
    hi = np.log10(1.5 * reg.n_radius)
    xi = _sample_vectors(rng, n, -2.0, hi)
    a = rng.uniform(spec.c1, spec.c2, n)

    g = gauge_many(body, xi)
    off = (np.abs(g - 1.0) > 1e-3) & _smooth_mask(body, xi)
    pts, av = xi[off], a[off]
    _, hx, hy = chain_value_flux(reg, pts, av)
    h = 1e-5
    fd = np.empty((pts.shape[0], 2))
    for axis in range(2):
        dq = np.zeros_like(pts)
        dq[:, axis] = h
        vp, _, _ = chain_value_flux(reg, pts + dq, av)
        vm, _, _ = chain_value_flux(reg, pts - dq, av)
        fd[:, axis] = (vp - vm) / (2.0 * h)
    err = np.hypot(fd[:, 0] - hx, fd[:, 1] - hy)
    viol = err - 1e-5 * (1.0 + np.hypot(hx, hy))
    out.append(_bound(f"{label}.flux_gradient_fd", viol, 0.0,
                      note=f"{pts.shape[0]} off-boundary samples, h=1e-5"))

    eta = _sample_vectors(rng, n, -2.0, hi)
    for eps in {reg.epsilon, float(min(reg.epsilon, 0.01))}:
        r_eps = reg.with_epsilon(eps)
        _, hx1, hy1 = chain_value_flux(r_eps, xi, a)
        _, hx2, hy2 = chain_value_flux(r_eps, eta, a)
        dx, dy = xi[:, 0] - eta[:, 0], xi[:, 1] - eta[:, 1]
        gap = (hx1 - hx2) * dx + (hy1 - hy2) * dy - eps * (dx * dx + dy * dy)
        out.append(_bound(f"{label}.monotonicity[eps={eps:g}]", -gap, 1e-10))

    far = _sample_vectors(rng, n, -2.0, np.log10(10.0 * reg.n_radius))
    a_far = rng.uniform(spec.c1, spec.c2, n)
    _, fx, fy = chain_value_flux(reg, far, a_far)
    norm_far = np.hypot(far[:, 0], far[:, 1])
    viol = np.hypot(fx, fy) \
        - reg.quad_growth * (1.0 + norm_far) * (1.0 + 1e-9)
    out.append(_bound(f"{label}.quadratic_growth", viol, 1e-12,
                      note=f"recorded C={reg.quad_growth:.6g}, |xi| up to 10N"))

    # agreement region: identical arithmetic, so the difference must be 0.0
    # (tiny inward margin keeps hypot rounding from crossing the ramp knot)
    radius = reg.gradient_bound + body.r_outer
    mag = radius * (1.0 - 1e-12) * np.sqrt(rng.uniform(0.0, 1.0, n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    near = np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)
    a_near = rng.uniform(spec.c1, spec.c2, n)
    val, _, _ = chain_value_flux(reg, near, a_near)
    s_near = np.hypot(near[:, 0], near[:, 1])
    f0 = a_near / spec.p * _pospow(gauge_many(body, near) - 1.0, spec.p)
    ref = f0 + 0.5 * reg.epsilon * s_near * s_near
    out.append(_bound(f"{label}.agreement_on_working_range",
                      np.abs(val - ref), 0.0,
                      note=f"|xi| <= K+R_E = {radius:.6g}"))
    return out


# ---------------------------------------------------------------------------
# solver


def _fit_cylinder(c: dict, grid: Grid, times: np.ndarray):
    """Clamp a configured cylinder onto a (possibly truncated) solve window."""
    t0 = min(float(c["t0"]), float(times[-1]))
    rho = float(c["rho"])
    depth = t0 - float(times[0])
    if depth <= 0:
        return None
    if rho ** 2 > depth:
        rho = float(np.sqrt(depth) * (1.0 - 1e-9))
    return Cylinder(float(c["x0"]), float(c["y0"]), t0, rho)


def solver_suite(cfg: ExperimentConfig, rng) -> tuple:
    """Sweep-based solver certificates; returns (results, shared context)."""
    out = []
    spec = cfg.build_spec()
    body = spec.body

    nx = min(cfg.nx, 33)
    ny = min(cfg.ny, 33)
    grid = Grid(cfg.rect[0], cfg.rect[1], cfg.rect[2], cfg.rect[3], nx, ny)
    full = cfg.time_levels()
    times = full if full.shape[0] <= 11 else full[:11]

    initial, data_expr, source = cfg.data_functions()
    time_dep = "t" in compile_expression(cfg.data).names
    coeff_time_dep = "t" in compile_expression(cfg.coeff).names
    conservative = source is None and not time_dep

    X, Y = grid.nodes()
    u0 = np.asarray(initial(X, Y), dtype=float)
    gx0, gy0 = cell_gradients(grid, u0)
    if cfg.gradient_bound is not None:
        k_bound = cfg.gradient_bound
    else:
        k_bound = 2.0 * max(1.0, float(np.max(np.hypot(gx0, gy0))))

    boundary_fn = data_expr if time_dep else None
    fields = {}
    regs = {}
    failures = []
    for eps in UNIFORM_SWEEP:
        reg = build_regularized(spec, k_bound, eps, sweep_seed=cfg.seed)
        regs[eps] = reg
        try:
            res = solve(grid, times, u0, reg, source_fn=source,
                        boundary_fn=boundary_fn, newton_tol=cfg.newton_tol)
        except Exception as exc:  # noqa: BLE001 - report, do not crash verify
            failures.append(f"eps={eps:g}: {exc}")
            continue
        fields[eps] = res.field
    out.append(CheckResult(
        "solver.sweep_converged", not failures,
        "; ".join(failures) if failures
        else f"{len(fields)} levels on {nx}x{ny}, {times.shape[0] - 1} steps, K={k_bound:.4g}"))

    ctx = {"grid": grid, "times": times, "fields": fields, "regs": regs,
           "k_bound": k_bound, "body": body, "u0": u0, "spec": spec,
           "source": source, "boundary_fn": boundary_fn}
    if failures:
        return out, ctx

    if conservative and not coeff_time_dep:
        worst_diss = -np.inf
        worst_sup = -np.inf
        sup0 = float(np.max(np.abs(u0)))
        for eps, fld in fields.items():
            reg = regs[eps]
            en = [discrete_energy(grid, fld.values[k], reg, float(times[k]))
                  for k in range(times.shape[0])]
            for k in range(times.shape[0] - 1):
                dt = float(times[k + 1] - times[k])
                drift = l2_cell_norm(grid, fld.values[k + 1] - fld.values[k])
                worst_diss = max(worst_diss,
                                 en[k + 1] + drift ** 2 / dt - en[k])
            worst_sup = max(worst_sup,
                            float(np.max(np.abs(fld.values))) - sup0)
        out.append(_bound("solver.energy_dissipation",
                          np.array([worst_diss]), 1e-9,
                          note="E(k+1) + |du|^2/dt <= E(k), all sweep levels"))
        out.append(_bound("solver.sup_bound", np.array([worst_sup]), 1e-8,
                          note=f"initial sup {sup0:.6g}"))
    else:
        note = "skipped: needs f == 0 and time-independent data"
        out.append(CheckResult("solver.energy_dissipation", True, note))
        out.append(CheckResult("solver.sup_bound", True, note))

    den = float(np.sum(1.0 + gx0 * gx0 + gy0 * gy0)) * grid.cell_area \
        * float(times[-1] - times[0])
    ratios = []
    for eps in UNIFORM_SWEEP:
        fld = fields[eps]
        num = 0.0
        for k in range(1, times.shape[0]):
            gx, gy = cell_gradients(grid, fld.values[k])
            num += float(times[k] - times[k - 1]) \
                * float(np.sum(gx * gx + gy * gy)) * grid.cell_area
        ratios.append(num / den)
    blow_up = all(b > a for a, b in zip(ratios, ratios[1:])) \
        and ratios[-1] > 2.0 * ratios[0]
    out.append(CheckResult(
        "solver.uniform_energy", not blow_up,
        f"C = {max(ratios):.6g}; ratios along eps {list(UNIFORM_SWEEP)}: "
        + "[" + ", ".join(f"{r:.4g}" for r in ratios) + "]"))

    table = eps_convergence_table(fields, GDeltaMap(body, cfg.deltas[0]))
    out.append(CheckResult(
        "solver.eps_cauchy", table.monotone,
        f"distances to eps={min(UNIFORM_SWEEP):g}: "
        + "[" + ", ".join(f"{d:.4g}" for d in table.distances) + "]"
        + ("" if table.monotone else f"; offending pair {table.offending}")))

    eps_min = min(UNIFORM_SWEEP)
    fld = fields[eps_min]
    lx = cfg.rect[1] - cfg.rect[0]
    ly = cfg.rect[3] - cfg.rect[2]
    cx, cy = cfg.rect[0] + 0.5 * lx, cfg.rect[2] + 0.5 * ly
    t_mid = 0.5 * float(times[0] + times[-1])
    tau = 0.45 * float(times[-1] - times[0])
    tests = [
        make_space_time_bump(cx, cy, t_mid, 0.35 * min(lx, ly), tau),
        make_space_time_bump(cx + 0.08 * lx, cy - 0.06 * ly, t_mid,
                             0.25 * min(lx, ly), tau),
    ]
    res = weak_residual(fld, regs[eps_min], tests, source_fn=source)
    lim = 10.0 * cfg.newton_tol / grid.cell_area
    out.append(_bound("solver.weak_residual", np.abs(res) - lim, 0.0,
                      note=f"bound 10*newton_tol/cell_area = {lim:.3e}"))

    noisy = np.array(fld.values)
    noisy[:, 1:-1, 1:-1] += 0.5 * rng.standard_normal(
        (times.shape[0], nx - 2, ny - 2))
    res_bad = weak_residual(GridField(grid, times, noisy), regs[eps_min],
                            tests, source_fn=source)
    out.append(CheckResult(
        "solver.residual_detects_non_solution",
        bool(np.max(np.abs(res_bad)) > 1e-3),
        f"max residual {float(np.max(np.abs(res_bad))):.3e} on noise field"))

    zero = solve(grid, times[:4] if times.shape[0] >= 4 else times,
                 np.zeros((nx, ny)), regs[max(UNIFORM_SWEEP)],
                 newton_tol=cfg.newton_tol)
    out.append(_bound("solver.zero_data_zero_field",
                      np.abs(zero.field.values).ravel(), 1e-12))

    sg = Grid(0.0, 1.0, 0.0, 1.0, 17, 17)
    st = np.linspace(0.0, 1.0, 11)
    sx, sy = sg.nodes()
    lin = GridField(sg, st, np.stack(
        [(1.0 + 2.0 * t) * (sx + sy) for t in st]))
    h_win = 0.35
    avg = steklov_average(lin, h_win)
    worst = 0.0
    for k, tk in enumerate(st):
        if tk < 1.0 - h_win:
            expect = (1.0 + 2.0 * (tk + 0.5 * h_win)) * (sx + sy)
            worst = max(worst, float(np.max(np.abs(avg.values[k] - expect))))
        else:
            worst = max(worst, float(np.max(np.abs(avg.values[k]))))
    out.append(_bound("solver.steklov_linear", np.array([worst]), 1e-10,
                      note="linear-in-t field, value at t + h/2; tail zero"))

    return out, ctx


# ---------------------------------------------------------------------------
# analysis measurements


def analysis_suite(cfg: ExperimentConfig, rng, ctx: dict | None = None) -> list:
    out = []
    g33 = Grid(0.0, 1.0, 0.0, 1.0, 33, 33)
    X, Y = g33.nodes()
    t3 = np.array([0.3, 0.4, 0.5])
    big = Cylinder(0.5, 0.5, 0.5, 0.4)

    affine = GridField(g33, t3, np.stack(
        [0.75 * X + 0.5 * Y + 0.25 for _ in t3]))
    vals = [excess(affine, Cylinder(0.5, 0.5, 0.5, r))
            for r in (0.4, 0.3, 0.2, 0.1)]
    out.append(CheckResult("analysis.excess_affine_exact",
                           all(v == 0.0 for v in vals),
                           f"nested radii values {vals}"))

    halves = np.abs(X - 0.5)
    base_field = GridField(g33, t3, np.stack([halves for _ in t3]))
    e_base = excess(base_field, big)
    shifted = GridField(g33, t3, np.stack(
        [halves + 0.75 * X + 0.5 * Y + 0.25 for _ in t3]))
    e_shift = excess(shifted, big)
    out.append(CheckResult(
        "analysis.excess_translation_invariant",
        e_base == 1.0 and e_shift == e_base,
        f"plus/minus halves: {e_base!r}, affine-shifted: {e_shift!r}"))

    noise = GridField(g33, t3, rng.standard_normal((3, 33, 33)))
    theta = 0.5
    small = Cylinder(0.5, 0.5, 0.5, theta * 0.4)
    ks_b, mask_b = _cylinder_cells(noise, big)
    ks_s, mask_s = _cylinder_cells(noise, small)
    count_ratio = (len(ks_b) * int(mask_b.sum())) \
        / (len(ks_s) * int(mask_s.sum()))
    lhs = excess(noise, small)
    rhs = count_ratio * excess(noise, big)
    out.append(_bound("analysis.excess_contraction",
                      np.array([lhs - rhs * (1.0 + 1e-12)]), 1e-12,
                      note=f"count ratio {count_ratio:.4g}"))

    dual = sample_dual_boundary(ball(1.0), 64)
    e_right = dual.points[0]  # (1, 0) for the unit ball
    steep = GridField(g33, t3, np.stack([3.0 * X for _ in t3]))
    flat = GridField(g33, t3, np.stack([0.5 * X for _ in t3]))
    delta0 = 0.25
    frac_hi = superlevel_measure(steep, big, e_right, delta0, 0.374)
    frac_flat = superlevel_measure(flat, big, e_right, delta0, 0.0)
    thresholds = np.linspace(-0.5, 1.5, 9)
    fr = [superlevel_measure(noise, big, e_right, delta0, th)
          for th in thresholds]
    monotone = all(a >= b for a, b in zip(fr, fr[1:]))
    out.append(CheckResult(
        "analysis.superlevel_measure",
        frac_hi == 1.0 and frac_flat == 0.0 and monotone,
        f"uniform-steep {frac_hi}, inside-body {frac_flat}, "
        f"monotone in threshold: {monotone}"))

    res_steep = classify_regime(steep, big, delta0, 0.5, 0.25, dual)
    res_flat = classify_regime(flat, big, delta0, 0.5, 0.25, dual)
    ok = (not res_steep.degenerate and res_steep.witness_angle is not None
          and res_flat.degenerate and res_flat.witness_angle is None)
    consistent = True
    for fld_i in (steep, flat, noise):
        r = classify_regime(fld_i, big, delta0, 0.5, 0.25, dual)
        best = float(np.max(r.fractions))
        consistent &= (1.0 - best < 0.25) == (not r.degenerate)
        recount = superlevel_measure(
            fld_i, big, dual.points[int(np.argmax(r.fractions))], delta0,
            (1.0 - 0.25) * 0.5)
        consistent &= recount == best
    out.append(CheckResult(
        "analysis.regime_dichotomy", ok and consistent,
        f"steep -> {res_steep.label}, inside-body -> {res_flat.label}, "
        f"fraction recount consistent: {consistent}"))

    # exact power law: spatially affine levels, so every oscillation pair is
    # a time pair and osc(sqrt(dt)) = dt lands on slope 2 to rounding
    g17 = Grid(0.0, 1.0, 0.0, 1.0, 17, 17)
    x17, _ = g17.nodes()
    tmod = np.array([0.0, 0.02, 0.0208, 0.1])
    mod_field = GridField(g17, tmod, np.stack(
        [(2.0 + t) * x17 for t in tmod]))
    gaps = np.array([tmod[2] - tmod[1], tmod[3] - tmod[2], tmod[3] - tmod[1]])
    fit = continuity_modulus(mod_field, GDeltaMap(ball(1.0), 0.0),
                             Cylinder(0.5, 0.5, 0.1, 0.3),
                             lags=np.sort(np.sqrt(gaps)))
    osc_monotone = bool(np.all(np.diff(fit.osc) >= 0.0))
    out.append(CheckResult(
        "analysis.modulus_exact_power",
        abs(fit.exponent - 2.0) <= 1e-6 and fit.r2 >= 1.0 - 1e-10
        and fit.stderr <= 1e-6 and osc_monotone,
        f"slope {fit.exponent:.12g} (want 2), R2 {fit.r2:.12g}, "
        f"stderr {fit.stderr:.2e}, osc nondecreasing: {osc_monotone}"))

    sentinel = continuity_modulus(affine, GDeltaMap(ball(1.0), 0.0), big)
    out.append(CheckResult(
        "analysis.modulus_exact_sentinel",
        sentinel.exact and sentinel.constant == 0.0,
        f"exact={sentinel.exact}, all osc zero: {bool(np.all(sentinel.osc == 0.0))}"))

    if ctx is not None and ctx.get("fields"):
        eps_min = min(ctx["fields"])
        fld = ctx["fields"][eps_min]
        cyl = _fit_cylinder(cfg.cylinders[0], ctx["grid"], ctx["times"])
        if cyl is None:
            out.append(CheckResult("analysis.modulus_solved", True,
                                   "skipped: no time depth on verify window"))
        else:
            fit_s = continuity_modulus(fld, GDeltaMap(ctx["body"],
                                                      cfg.deltas[0]), cyl)
            if fit_s.exact:
                out.append(CheckResult(
                    "analysis.modulus_solved", True,
                    "truncated gradient identically constant on the cylinder"))
            else:
                out.append(CheckResult(
                    "analysis.modulus_solved",
                    0.0 < fit_s.exponent <= 1.0 and fit_s.r2 >= 0.9,
                    f"exponent {fit_s.exponent:.4g} (want (0,1]), "
                    f"R2 {fit_s.r2:.4g} (want >= 0.9), "
                    f"stderr {fit_s.stderr:.2g}, eps={eps_min:g}, "
                    f"delta={cfg.deltas[0]:g}"))

    geo = geometric_convergence(1.0, 2.0, 1.0, 0.5)
    expected = np.array([0.5, 0.25, 0.125, 0.0625])
    traj_ok = (geo.status == "converged"
               and np.array_equal(geo.iterates[:4], expected))
    rej = geometric_convergence(1.0, 2.0, 1.0, 0.6)
    zero_geo = geometric_convergence(1.0, 2.0, 1.0, 0.0)
    out.append(CheckResult(
        "analysis.geometric_convergence",
        traj_ok and rej.status == "threshold_violated"
        and zero_geo.status == "converged"
        and bool(np.all(zero_geo.iterates == 0.0)),
        f"trajectory head {geo.iterates[:4].tolist()}, "
        f"Y0=0.6 -> {rej.status} (threshold {rej.threshold})"))

    rho = np.round(np.arange(1.0, 1.95, 0.1), 10)
    phi = 1.0 / (2.0 - rho)
    cert = absorption_iteration(rho, phi, 0.5, 0.1, 0.0, 0.0, 1.0, 0.0)
    cert_zero = absorption_iteration(np.array([0.0, 1.0]), np.zeros(2),
                                     0.5, 0.0, 0.0, 0.0, 1.0, 0.0)
    cert_bad = absorption_iteration(rho, phi, 0.5, 0.01, 0.0, 0.0, 1.0, 0.0)
    out.append(CheckResult(
        "analysis.absorption_iteration",
        cert.hypothesis_ok and cert.dominates_samples
        and cert.bound >= phi[0]
        and cert_zero.hypothesis_ok and cert_zero.bound == 0.0
        and not cert_bad.hypothesis_ok
        and cert_bad.failing_pair == (1.0, 1.1),
        f"1/(R1-rho) grid: c_tilde {cert.c_tilde:.4g}, bound {cert.bound:.4g} "
        f">= phi(rho0) {phi[0]:.4g}; A too small flags pair {cert_bad.failing_pair}"))

    ident = {e: GridField(g33, t3, np.stack([5.0 * X for _ in t3]))
             for e in (1.0, 0.3, 0.1)}
    tbl = eps_convergence_table(ident, GDeltaMap(ball(1.0), 0.0))
    skew = {
        1.0: GridField(g33, t3, np.stack([5.05 * X for _ in t3])),
        0.3: GridField(g33, t3, np.stack([5.5 * X for _ in t3])),
        0.1: GridField(g33, t3, np.stack([5.0 * X for _ in t3])),
    }
    tbl_bad = eps_convergence_table(skew, GDeltaMap(ball(1.0), 0.0))
    out.append(CheckResult(
        "analysis.eps_table_detection",
        tbl.monotone and all(d == 0.0 for d in tbl.distances)
        and not tbl_bad.monotone and tbl_bad.offending == (1.0, 0.3),
        f"identical fields -> zeros ({tbl.distances}); "
        f"inflated mid level flagged {tbl_bad.offending}"))
    return out


# ---------------------------------------------------------------------------
# config plumbing


def config_suite(cfg: ExperimentConfig) -> list:
    out = []
    round_trip = ExperimentConfig.from_dict(cfg.to_dict())
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "cfg.json"
        cfg.save(path)
        reloaded = ExperimentConfig.load(path)
    out.append(CheckResult(
        "config.round_trip",
        round_trip == cfg and reloaded == cfg
        and round_trip.config_hash() == cfg.config_hash(),
        f"hash {cfg.config_hash()[:12]} stable through dict and file cycles"))

    rejects = []
    for tag, tree in (
        ("eps_range", {"epsilons": [1.5]}),
        ("flat_polytope", {"body": {"kind": "polytope",
                                    "vertices": [[1.0, 0.0], [-1.0, 0.0]]}}),
        ("coarse_grid", {"grid": {"nx": 8, "ny": 8}}),
    ):
        try:
            ExperimentConfig.from_dict(tree)
            rejects.append(tag)
        except (ConfigError, ValueError):
            pass
    out.append(CheckResult("config.rejections", not rejects,
                           "accepted invalid trees: " + ", ".join(rejects)
                           if rejects else
                           "eps=1.5, 2-vertex polytope, 8x8 grid all rejected"))
    return out


def determinism_check(cfg: ExperimentConfig, ctx: dict) -> CheckResult:
    """Repeat one sweep solve from scratch and demand bitwise equality."""
    if not ctx.get("fields"):
        return CheckResult("cli.determinism", True,
                           "skipped: no solved fields to compare")
    eps = sorted(ctx["fields"])[len(ctx["fields"]) // 2]
    reg = build_regularized(ctx["spec"], ctx["k_bound"], eps,
                            sweep_seed=cfg.seed)
    res = solve(ctx["grid"], ctx["times"], ctx["u0"], reg,
                source_fn=ctx["source"], boundary_fn=ctx["boundary_fn"],
                newton_tol=cfg.newton_tol)
    same = np.array_equal(res.field.values, ctx["fields"][eps].values)
    return CheckResult("cli.determinism", bool(same),
                       f"repeat solve at eps={eps:g} "
                       + ("bitwise identical" if same else "DIVERGED"))


# ---------------------------------------------------------------------------


def run_all(cfg: ExperimentConfig) -> list:
    """Every certificate suite at the config's seed, in ledger order."""
    results = []
    seed = cfg.seed

    bodies_map = standard_bodies()
    cfg_body = cfg.build_body()
    cfg_label = cfg.body.get("kind", "body")

    rng = np.random.default_rng([seed, 1])
    for label, body in bodies_map.items():
        results.extend(gauge_suite(label, body, rng))
    if cfg_label not in bodies_map:
        results.extend(gauge_suite(f"config:{cfg_label}", cfg_body, rng))

    rng = np.random.default_rng([seed, 2])
    for label, body in bodies_map.items():
        results.extend(gmap_suite(label, body, cfg.deltas, rng,
                                  include_collapse=False))
    # the uniform collapse bound only holds when r_E * R_E <= 1; it is
    # asserted for the configured body, whose certificate gates the run
    results.extend(gmap_suite(f"config:{cfg_label}", cfg_body, cfg.deltas,
                              np.random.default_rng([seed, 3]),
                              include_collapse=True))

    rng = np.random.default_rng([seed, 4])
    p_values = [2.0, 3.0, 4.0]
    if cfg.p >= 2.0 and cfg.p not in p_values:
        p_values.append(cfg.p)
    results.extend(prototype_suite(rng, p_values=p_values))

    solver_results, ctx = solver_suite(cfg, np.random.default_rng([seed, 5]))

    rng = np.random.default_rng([seed, 6])
    reg = ctx["regs"].get(cfg.epsilons[0]) if ctx.get("regs") else None
    if reg is None:
        reg = build_regularized(cfg.build_spec(), ctx["k_bound"],
                                cfg.epsilons[0], sweep_seed=seed)
    results.extend(chain_suite(reg, rng))

    results.extend(solver_results)
    results.extend(analysis_suite(cfg, np.random.default_rng([seed, 7]), ctx))
    results.extend(config_suite(cfg))
    results.append(determinism_check(cfg, ctx))
    return results
