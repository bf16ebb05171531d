"""Implicit time stepping for the degenerate gradient flow.

Each step minimizes the convex functional

    J(v) = sum_cells [ (v_b - u_b)^2 / (2 dt) + Fhat_eps(x_c, t, D_h v)
                       - f_b v_b ] * hx * hy

over nodal fields v matching the Dirichlet data, where v_b is the value at
the cell's base node, x_c the cell center and D_h v the forward-difference
cell gradient.  The gradient of J uses the exact adjoint of D_h, so the
minimizer satisfies the discrete Euler-Lagrange system exactly (up to the
Newton tolerance) and energy dissipation follows from convexity alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .grid import Grid, GridField, cell_gradients, neg_divergence

ARMIJO_C = 1e-4


class SolverError(RuntimeError):
    pass


class NewtonError(SolverError):
    """Newton loop failed to reach the gradient tolerance."""


@dataclass
class StepStats:
    step: int
    t: float
    energy: float
    sup_norm: float
    newton_iters: int
    cg_iters: int
    grad_norm: float
    band_cells: int


@dataclass
class SolveResult:
    field: GridField
    stats: list = field(default_factory=list)

    def energy_rows(self):
        """Rows for the energy-history table: step,t,energy,sup_norm,newton_iters."""
        return [
            (s.step, s.t, s.energy, s.sup_norm, s.newton_iters)
            for s in self.stats
        ]


def _cells_coeff(grid: Grid, reg, t: float) -> np.ndarray:
    xc, yc = grid.cell_centers()
    return np.broadcast_to(
        np.asarray(reg.spec.coeff_at(xc, yc, t), dtype=float), xc.shape
    ).copy()


def _base_source(grid: Grid, source_fn, t: float) -> np.ndarray:
    if source_fn is None:
        return np.zeros((grid.nx - 1, grid.ny - 1))
    xb, yb = grid.cell_base_points()
    return np.broadcast_to(np.asarray(source_fn(xb, yb, t), dtype=float),
                           xb.shape).copy()


def _impose_boundary(grid: Grid, v: np.ndarray, boundary_fn, t: float) -> None:
    if boundary_fn is None:
        return
    X, Y = grid.nodes()
    g = np.broadcast_to(np.asarray(boundary_fn(X, Y, t), dtype=float), X.shape)
    v[0, :] = g[0, :]
    v[-1, :] = g[-1, :]
    v[:, 0] = g[:, 0]
    v[:, -1] = g[:, -1]


def _zero_boundary(arr: np.ndarray) -> np.ndarray:
    arr[0, :] = 0.0
    arr[-1, :] = 0.0
    arr[:, 0] = 0.0
    arr[:, -1] = 0.0
    return arr


def discrete_energy(grid: Grid, u: np.ndarray, reg, t: float,
                    source_fn=None, backend: Optional[str] = None) -> float:
    """Variational energy sum_cells [Fhat_eps(D_h u) - f u] * cell_area."""
    energy_flux, _, _ = _kernels.get_backend(backend)
    gx, gy = cell_gradients(grid, u)
    a = _cells_coeff(grid, reg, t)
    val, _, _ = energy_flux(gx, gy, a, reg)
    total = float(np.sum(val))
    f_b = _base_source(grid, source_fn, t)
    total -= float(np.sum(f_b * u[:-1, :-1]))
    return total * grid.cell_area


def step(grid: Grid, u_prev: np.ndarray, t_next: float, dt: float, reg,
         source_fn=None, boundary_fn=None, newton_tol: float = 1e-10,
         max_newton: int = 60, cg_maxiter: int = 2000,
         backend: Optional[str] = None):
    """One implicit step.  Returns (new values, newton iters, cg iters, gnorm)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    energy_flux, hvp, _ = _kernels.get_backend(backend)
    area = grid.cell_area
    a = _cells_coeff(grid, reg, t_next)
    f_b = _base_source(grid, source_fn, t_next)
    nxm, nym = grid.nx - 1, grid.ny - 1

    v = np.array(u_prev, dtype=float)
    _impose_boundary(grid, v, boundary_fn, t_next)
    u_base = u_prev[:-1, :-1]

    def eval_value_grad(w):
        gx, gy = cell_gradients(grid, w)
        val, hx_, hy_ = energy_flux(gx, gy, a, reg)
        hx_ = hx_.reshape(nxm, nym)
        hy_ = hy_.reshape(nxm, nym)
        diff = w[:-1, :-1] - u_base
        J = float(np.sum(val)) + float(np.sum(diff * diff)) / (2.0 * dt)
        J -= float(np.sum(f_b * w[:-1, :-1]))
        J *= area
        grad = neg_divergence(grid, hx_, hy_)
        grad[:-1, :-1] += diff / dt - f_b
        grad *= area
        _zero_boundary(grad)
        return J, grad, gx, gy

    total_cg = 0
    gnorm = np.inf
    it = 0
    for it in range(1, max_newton + 1):
        J, grad, gx, gy = eval_value_grad(v)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= newton_tol:
            it -= 1
            break

        def matvec(flat):
            d = flat.reshape(grid.nx, grid.ny)
            dgx, dgy = cell_gradients(grid, d)
            qx, qy = hvp(gx, gy, a, dgx, dgy, reg)
            out = neg_divergence(grid, qx.reshape(nxm, nym),
                                 qy.reshape(nxm, nym))
            out[:-1, :-1] += d[:-1, :-1] / dt
            out *= area
            _zero_boundary(out)
            return out.ravel()

        op = LinearOperator((v.size, v.size), matvec=matvec)
        counter = {"n": 0}

        def cb(_xk):
            counter["n"] += 1

        rtol = min(0.1, np.sqrt(gnorm))
        d_flat, info = cg(op, -grad.ravel(), rtol=rtol, atol=0.0,
                          maxiter=cg_maxiter, callback=cb)
        total_cg += counter["n"]
        if info < 0:
            raise NewtonError(f"cg breakdown (info={info}) at t={t_next}")
        d = d_flat.reshape(grid.nx, grid.ny)
        slope = float(np.sum(grad * d))
        if slope >= 0.0:
            # cg returned a non-descent direction; fall back to steepest descent
            d = -grad
            slope = -float(np.sum(grad * grad))

        alpha = 1.0
        while True:
            J_try, _, _, _ = eval_value_grad(v + alpha * d)
            if J_try <= J + ARMIJO_C * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                raise NewtonError(
                    f"line search stalled at t={t_next}, |grad|={gnorm:.3e}"
                )
        v = v + alpha * d
    else:
        raise NewtonError(
            f"no convergence in {max_newton} Newton iterations at t={t_next}; "
            f"|grad|={gnorm:.3e}"
        )
    return v, it, total_cg, gnorm


def _band_count(grid: Grid, u: np.ndarray, reg) -> int:
    from .bodies import gauge_many
    gx, gy = cell_gradients(grid, u)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    g = gauge_many(reg.spec.body, pts)
    return int(np.sum(np.abs(g - 1.0) <= reg.boundary_tol))


def solve(grid: Grid, times, initial, reg, source_fn=None, boundary_fn=None,
          newton_tol: float = 1e-10, max_newton: int = 60,
          backend: Optional[str] = None,
          progress: Optional[Callable[[StepStats], None]] = None) -> SolveResult:
    """March the implicit scheme over the given time levels.

    ``initial`` is either a nodal array or a callable initial(X, Y).
    With no ``boundary_fn`` the boundary values of the initial state are held
    fixed for all times.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing with >= 2 levels")
    if callable(initial):
        X, Y = grid.nodes()
        u0 = np.asarray(initial(X, Y), dtype=float)
    else:
        u0 = np.array(initial, dtype=float)
    if u0.shape != (grid.nx, grid.ny):
        raise ValueError("initial state has wrong shape")

    nt = times.shape[0]
    values = np.empty((nt, grid.nx, grid.ny))
    values[0] = u0
    stats = [
        StepStats(0, float(times[0]),
                  discrete_energy(grid, u0, reg, float(times[0]), source_fn,
                                  backend),
                  float(np.max(np.abs(u0))), 0, 0, 0.0,
                  _band_count(grid, u0, reg))
    ]
    if progress is not None:
        progress(stats[0])
    for k in range(nt - 1):
        dt = float(times[k + 1] - times[k])
        t_next = float(times[k + 1])
        v, n_it, n_cg, gnorm = step(
            grid, values[k], t_next, dt, reg, source_fn, boundary_fn,
            newton_tol, max_newton, backend=backend,
        )
        values[k + 1] = v
        st = StepStats(
            k + 1, t_next,
            discrete_energy(grid, v, reg, t_next, source_fn, backend),
            float(np.max(np.abs(v))), n_it, n_cg, gnorm,
            _band_count(grid, v, reg),
        )
        stats.append(st)
        if progress is not None:
            progress(st)
    return SolveResult(GridField(grid, times, values), stats)


def bump(s: np.ndarray) -> np.ndarray:
    """Standard mollifier profile: exp(-1/(1-s^2)) inside |s|<1, 0 outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


def make_space_time_bump(cx: float, cy: float, ct: float, rho: float,
                         tau: float):
    """Tensor mollifier supported in the rho-ball around (cx, cy) times
    (ct - tau, ct + tau)."""

    def phi(X, Y, t):
        rad = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2) / rho
        return bump(rad) * float(bump(np.array((t - ct) / tau)))

    return phi


def weak_residual(field: GridField, reg, test_fns, source_fn=None,
                  strip_epsilon: bool = False,
                  backend: Optional[str] = None) -> np.ndarray:
    """Normalized space-time Euler-Lagrange residual against test functions.

    Uses the summation-by-parts form -u * d_t(phi): for a field produced by
    ``solve`` the value is bounded by the Newton tolerance divided by the
    cell area, independent of the test function.  Each test function must
    vanish on the spatial boundary and at the first and last time levels.
    ``strip_epsilon`` evaluates the flux pairing with the eps lift removed.
    """
    energy_flux, _, _ = _kernels.get_backend(backend)
    grid = field.grid
    times = field.times
    X, Y = grid.nodes()
    area = grid.cell_area
    reg_used = reg.with_epsilon(0.0) if strip_epsilon else reg

    out = []
    for phi in test_fns:
        phis = [np.broadcast_to(np.asarray(phi(X, Y, float(t)), dtype=float),
                                X.shape) for t in times]
        for idx in (0, len(times) - 1):
            if np.max(np.abs(phis[idx])) > 1e-13:
                raise ValueError(
                    "test function must vanish at the first and last times"
                )
        for ph in phis:
            edge = max(np.max(np.abs(ph[0, :])), np.max(np.abs(ph[-1, :])),
                       np.max(np.abs(ph[:, 0])), np.max(np.abs(ph[:, -1])))
            if edge > 1e-13:
                raise ValueError("test function must vanish on the boundary")

        resid = 0.0
        mass = 0.0
        for k in range(len(times) - 1):
            dt = float(times[k + 1] - times[k])
            t_next = float(times[k + 1])
            phi_next = phis[k + 1]
            dphi = phi_next - phis[k]
            u_now = field.values[k]
            # time pairing (Abel form) at base nodes; dt cancels
            resid -= float(np.sum(u_now[:-1, :-1] * dphi[:-1, :-1])) * area
            gx, gy = cell_gradients(grid, field.values[k + 1])
            a = _cells_coeff(grid, reg_used, t_next)
            _, hx_, hy_ = energy_flux(gx, gy, a, reg_used)
            pgx, pgy = cell_gradients(grid, phi_next)
            resid += dt * area * float(
                np.sum(hx_.reshape(pgx.shape) * pgx)
                + np.sum(hy_.reshape(pgy.shape) * pgy)
            )
            if source_fn is not None:
                f_b = _base_source(grid, source_fn, t_next)
                resid -= dt * area * float(
                    np.sum(f_b * phi_next[:-1, :-1])
                )
            mass += dt * area * float(np.sum(np.abs(phi_next[:-1, :-1])))
        if mass <= 0.0:
            raise ValueError("test function vanishes on the whole grid")
        out.append(resid / mass)
    return np.asarray(out)


def steklov_average(field: GridField, h: float) -> GridField:
    """Forward time average over windows of length h.

    The field is treated as piecewise linear in time; averages whose window
    leaves the time interval (start times in [T-h, T)) are set to zero.
    For fields linear in t the average equals the value at t + h/2.
    """
    if h <= 0:
        raise ValueError("window length must be positive")
    times = field.times
    T = float(times[-1])
    vals = field.values
    nt = times.shape[0]

    # cumulative exact integral of the piecewise-linear interpolant
    seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(times)[:, None, None]
    cum = np.concatenate([np.zeros((1,) + vals.shape[1:]),
                          np.cumsum(seg, axis=0)], axis=0)

    def integral_to(t: float) -> np.ndarray:
        j = int(np.searchsorted(times, t, side="right") - 1)
        j = min(max(j, 0), nt - 2)
        tj = float(times[j])
        frac = t - tj
        dtj = float(times[j + 1] - times[j])
        u_t = vals[j] + (vals[j + 1] - vals[j]) * (frac / dtj)
        return cum[j] + 0.5 * (vals[j] + u_t) * frac

    out = np.zeros_like(vals)
    for k, tk in enumerate(times):
        tk = float(tk)
        if tk < T - h:
            out[k] = (integral_to(tk + h) - integral_to(tk)) / h
    return GridField(field.grid, times.copy(), out)
