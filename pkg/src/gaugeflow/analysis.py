"""Diagnostics over solved fields: excess decay, level-set measures, regime
classification, continuity-modulus fits, and the scalar iteration utilities.

All measurements are read-only.  Cylinder membership is decided by cell
centers for cell quantities and by node coordinates for node quantities;
time levels belong to the backward window (t0 - rho^2, t0].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bodies import DualSample
from .gmaps import GDeltaMap
from .grid import GridField, cell_gradients, node_average

_TOL = 1e-12


@dataclass(frozen=True)
class Cylinder:
    """Backward parabolic cylinder: ball of radius rho, time depth rho^2."""

    x0: float
    y0: float
    t0: float
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("cylinder radius must be positive")

    def contains_time(self, t: float) -> bool:
        return self.t0 - self.rho ** 2 - _TOL < t <= self.t0 + _TOL


def _check_contained(fld: GridField, cyl: Cylinder) -> None:
    g = fld.grid
    if not (g.x0 - _TOL <= cyl.x0 - cyl.rho
            and cyl.x0 + cyl.rho <= g.x1 + _TOL
            and g.y0 - _TOL <= cyl.y0 - cyl.rho
            and cyl.y0 + cyl.rho <= g.y1 + _TOL):
        raise ValueError("cylinder ball leaves the grid rectangle")
    t_first, t_last = float(fld.times[0]), float(fld.times[-1])
    if cyl.t0 > t_last + _TOL or cyl.t0 - cyl.rho ** 2 < t_first - _TOL:
        raise ValueError("cylinder time window leaves the solved interval")


def _cylinder_cells(fld: GridField, cyl: Cylinder):
    """Time-level indices and the cell mask (by cell centers) of a cylinder."""
    _check_contained(fld, cyl)
    xc, yc = fld.grid.cell_centers()
    mask = (xc - cyl.x0) ** 2 + (yc - cyl.y0) ** 2 <= cyl.rho ** 2 + _TOL
    ks = [k for k, t in enumerate(fld.times) if cyl.contains_time(float(t))]
    if not ks or not mask.any():
        raise ValueError("cylinder contains no cells or no time levels")
    return ks, mask


def excess(fld: GridField, cyl: Cylinder) -> float:
    """Cylinder average of |D_h u - (D_h u)_cyl|^2 over cells."""
    ks, mask = _cylinder_cells(fld, cyl)
    gxs = []
    gys = []
    for k in ks:
        gx, gy = cell_gradients(fld.grid, fld.values[k])
        gxs.append(gx[mask])
        gys.append(gy[mask])
    gx_all = np.concatenate(gxs)
    gy_all = np.concatenate(gys)
    dx = gx_all - gx_all.mean()
    dy = gy_all - gy_all.mean()
    return float(np.mean(dx * dx + dy * dy))


def superlevel_measure(fld: GridField, cyl: Cylinder, e_star, delta: float,
                       threshold: float) -> float:
    """Fraction of cylinder cells with <D_h u, e*> - (1+delta) > threshold."""
    ks, mask = _cylinder_cells(fld, cyl)
    ex, ey = float(e_star[0]), float(e_star[1])
    above = 0
    total = 0
    for k in ks:
        gx, gy = cell_gradients(fld.grid, fld.values[k])
        proj = gx[mask] * ex + gy[mask] * ey
        above += int(np.sum(proj - (1.0 + delta) > threshold))
        total += proj.size
    return above / total


@dataclass(frozen=True)
class RegimeResult:
    degenerate: bool
    witness_angle: Optional[float]
    witness_point: Optional[tuple]
    fractions: np.ndarray

    @property
    def label(self) -> str:
        return "degenerate" if self.degenerate else "non_degenerate"


def classify_regime(fld: GridField, cyl: Cylinder, delta: float, mu: float,
                    nu: float, dual: DualSample) -> RegimeResult:
    """Dichotomy over the sampled dual boundary.

    Non-degenerate with witness e* if the cylinder complement of the
    super-level set {<D_h u, e*> - (1+delta) > (1-nu)*mu} has fraction < nu
    for at least one sampled e*; degenerate otherwise.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not (0 < nu <= 0.25):
        raise ValueError("nu must lie in (0, 1/4]")
    threshold = (1.0 - nu) * mu
    fracs = np.array([
        superlevel_measure(fld, cyl, dual.points[i], delta, threshold)
        for i in range(dual.points.shape[0])
    ])
    best = int(np.argmax(fracs))
    if 1.0 - fracs[best] < nu:
        return RegimeResult(False, float(dual.angles[best]),
                            (float(dual.points[best, 0]),
                             float(dual.points[best, 1])), fracs)
    return RegimeResult(True, None, None, fracs)


@dataclass(frozen=True)
class ModulusFit:
    exponent: float
    constant: float
    r2: float
    stderr: float
    exact: bool
    lags: np.ndarray
    osc: np.ndarray


def default_lags(r_max: float, decades: float = 1.0) -> np.ndarray:
    """Geometric lag set with ratio sqrt(2) spanning the requested decades."""
    if r_max <= 0 or decades <= 0:
        raise ValueError("r_max and decades must be positive")
    n = int(np.ceil(decades * np.log(10.0) / np.log(np.sqrt(2.0)))) + 1
    return r_max * np.sqrt(2.0) ** (-np.arange(n)[::-1])


def continuity_modulus(fld: GridField, gmap: GDeltaMap, region: Cylinder,
                       lags=None, pool_size: int = 2048) -> ModulusFit:
    """Log-log fit of the oscillation of G_delta(D_h u) against parabolic lag.

    osc(r) = max over point pairs at parabolic distance <= r of the Euclidean
    difference of the truncated gradients; the pair pool is shared across all
    lags, so osc is nondecreasing in r by construction.  Node gradients are
    adjacent-cell averages.  An identically-zero oscillation is reported with
    the ``exact`` sentinel instead of a fit.
    """
    _check_contained(fld, region)
    grid = fld.grid
    X, Y = grid.nodes()
    in_ball = ((X - region.x0) ** 2 + (Y - region.y0) ** 2
               <= region.rho ** 2 + _TOL)
    ks = [k for k, t in enumerate(fld.times)
          if region.contains_time(float(t))]
    if not ks or not in_ball.any():
        raise ValueError("region contains no nodes or no time levels")

    if lags is None:
        r_max = 2.0 * region.rho + region.rho  # spatial diameter + sqrt(depth)
        lags = default_lags(r_max)
    lags = np.sort(np.asarray(lags, dtype=float))
    if lags.shape[0] < 3:
        raise ValueError("need at least 3 lag bins")
    if lags[-1] < 10.0 * lags[0] * (1.0 - 1e-9):
        raise ValueError("lag set must span at least one decade")

    pts = []
    gvals = []
    for k in ks:
        gx, gy = cell_gradients(grid, fld.values[k])
        ngx = node_average(grid, gx)[in_ball]
        ngy = node_average(grid, gy)[in_ball]
        vec = gmap.apply_many(np.stack([ngx, ngy], axis=1))
        gvals.append(vec)
        tcol = np.full(ngx.shape[0], float(fld.times[k]))
        pts.append(np.stack([X[in_ball], Y[in_ball], tcol], axis=1))
    pts = np.concatenate(pts)
    gvals = np.concatenate(gvals)

    if pts.shape[0] > pool_size:
        sel = np.unique(np.linspace(0, pts.shape[0] - 1, pool_size).astype(int))
        pts = pts[sel]
        gvals = gvals[sel]

    dx = pts[:, None, 0] - pts[None, :, 0]
    dy = pts[:, None, 1] - pts[None, :, 1]
    dt = pts[:, None, 2] - pts[None, :, 2]
    dp = np.sqrt(dx * dx + dy * dy) + np.sqrt(np.abs(dt))
    dv = np.sqrt(((gvals[:, None, :] - gvals[None, :, :]) ** 2).sum(axis=2))
    iu = np.triu_indices(pts.shape[0], k=1)
    dp = dp[iu]
    dv = dv[iu]

    osc = np.array([
        float(dv[dp <= r].max()) if np.any(dp <= r) else 0.0 for r in lags
    ])

    if float(osc.max(initial=0.0)) == 0.0:
        return ModulusFit(float("nan"), 0.0, 1.0, 0.0, True, lags, osc)

    pos = osc > 0.0
    if int(pos.sum()) < 2:
        return ModulusFit(float("nan"), float("nan"), 0.0, float("nan"),
                          False, lags, osc)
    lx = np.log(lags[pos])
    ly = np.log(osc[pos])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    npts = lx.shape[0]
    if npts > 2:
        denom = float(np.sum((lx - lx.mean()) ** 2))
        stderr = float(np.sqrt(ss_res / (npts - 2) / denom))
    else:
        stderr = 0.0
    return ModulusFit(float(slope), float(np.exp(intercept)), r2, stderr,
                      False, lags, osc)


@dataclass(frozen=True)
class GeometricResult:
    status: str  # "converged" or "threshold_violated"
    threshold: float
    iterates: np.ndarray


def geometric_convergence(C: float, b: float, kappa: float, Y0: float,
                          steps: int = 200) -> GeometricResult:
    """Fast-convergence recursion Y_{i+1} = C * b^i * Y_i^{1+kappa}.

    Iterates only when Y0 is at or below the smallness threshold
    C^{-1/kappa} * b^{-1/kappa^2}; decay is then monotone down to 1e-12.
    """
    if C < 0:
        raise ValueError("C must be nonnegative")
    if b <= 1:
        raise ValueError("b must exceed 1")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if Y0 < 0:
        raise ValueError("Y0 must be nonnegative")
    threshold = float("inf") if C == 0 else C ** (-1.0 / kappa) * b ** (-1.0 / kappa ** 2)
    if Y0 > threshold:
        return GeometricResult("threshold_violated", threshold,
                               np.array([Y0]))
    iterates = [Y0]
    y = Y0
    for i in range(steps):
        y_next = C * b ** i * y ** (1.0 + kappa)
        if y_next > y + _TOL:
            raise RuntimeError("recursion failed to decay monotonically")
        iterates.append(y_next)
        y = y_next
        if y < 1e-12:
            break
    else:
        raise RuntimeError(
            f"recursion did not reach 1e-12 within {steps} steps"
        )
    return GeometricResult("converged", threshold, np.array(iterates))


@dataclass(frozen=True)
class AbsorptionCertificate:
    hypothesis_ok: bool
    failing_pair: Optional[tuple]
    c_tilde: float
    span: float
    bound: float
    dominates_samples: bool


def absorption_iteration(rho_grid, phi_values, eta: float, A: float, B: float,
                         C: float, alpha: float, beta: float) -> AbsorptionCertificate:
    """Certify the absorption hypothesis on a grid and return its conclusion.

    Hypothesis: phi(rho) <= eta*phi(r) + A/(r-rho)^alpha + B/(r-rho)^beta + C
    for all grid pairs rho < r.  When it holds the standard interpolation
    sequence gives phi(rho0) <= c_tilde*(A/span^alpha + B/span^beta + C) with
    span = r0 - rho0 over the grid endpoints; a single c_tilde computed for
    the alpha term dominates the beta and constant terms since alpha >= beta.
    """
    if not (0 < eta < 1):
        raise ValueError("eta must lie in (0, 1)")
    if not (alpha >= beta >= 0):
        raise ValueError("need alpha >= beta >= 0")
    rho_grid = np.asarray(rho_grid, dtype=float)
    phi_values = np.asarray(phi_values, dtype=float)
    if rho_grid.ndim != 1 or rho_grid.shape != phi_values.shape:
        raise ValueError("rho grid and phi samples must be matching 1-D arrays")
    if rho_grid.shape[0] < 2 or np.any(np.diff(rho_grid) <= 0):
        raise ValueError("rho grid must be strictly increasing with >= 2 points")
    if np.any(phi_values < 0):
        raise ValueError("phi samples must be nonnegative")

    fail = None
    for i in range(rho_grid.shape[0] - 1):
        d = rho_grid[i + 1:] - rho_grid[i]
        rhs = eta * phi_values[i + 1:] + A / d ** alpha + B / d ** beta + C
        bad = np.nonzero(phi_values[i] > rhs + 1e-12)[0]
        if bad.size:
            j = i + 1 + int(bad[0])
            fail = (float(rho_grid[i]), float(rho_grid[j]))
            break

    if alpha > 0:
        lam = eta ** (1.0 / (2.0 * alpha))
        c_tilde = (1.0 - lam) ** (-alpha) / (1.0 - eta * lam ** (-alpha))
    else:
        c_tilde = 1.0 / (1.0 - eta)
    span = float(rho_grid[-1] - rho_grid[0])
    bound = c_tilde * (A / span ** alpha + B / span ** beta + C)
    dominates = fail is None and phi_values[0] <= bound * (1 + 1e-12) + 1e-12
    return AbsorptionCertificate(fail is None, fail, float(c_tilde), span,
                                 float(bound), bool(dominates))


@dataclass(frozen=True)
class EpsTable:
    eps: list
    distances: list
    monotone: bool
    offending: Optional[tuple]


def eps_convergence_table(solutions, gmap: GDeltaMap,
                          noise_tol: float = 0.05) -> EpsTable:
    """Distances of G_delta(D_h u_eps) to the smallest-eps reference.

    ``solutions`` maps eps -> GridField on identical grids and time axes.
    Distances are space-time L2 over cells with left-endpoint time weights;
    the verdict checks monotone decrease along decreasing eps, allowing the
    given relative noise.
    """
    items = sorted(solutions.items(), key=lambda kv: -kv[0])
    if len(items) < 3:
        raise ValueError("need at least 3 eps levels")
    ref_eps, ref_field = items[-1]
    for eps_val, fld in items:
        if fld.grid != ref_field.grid:
            raise ValueError("eps levels must share one grid")
        if fld.times.shape != ref_field.times.shape or np.any(
                np.abs(fld.times - ref_field.times) > _TOL):
            raise ValueError("eps levels must share one time axis")

    grid = ref_field.grid
    ref_g = []
    for k in range(ref_field.times.shape[0]):
        gx, gy = cell_gradients(grid, ref_field.values[k])
        ref_g.append(gmap.apply_many(
            np.stack([gx.ravel(), gy.ravel()], axis=1)))

    wts = np.diff(ref_field.times)
    eps_list = []
    dists = []
    for eps_val, fld in items:
        acc = 0.0
        for k in range(1, fld.times.shape[0]):
            gx, gy = cell_gradients(grid, fld.values[k])
            gv = gmap.apply_many(np.stack([gx.ravel(), gy.ravel()], axis=1))
            diff = gv - ref_g[k]
            acc += float(wts[k - 1]) * float(np.sum(diff * diff)) \
                * grid.cell_area
        eps_list.append(float(eps_val))
        dists.append(float(np.sqrt(acc)))

    monotone = True
    offending = None
    for i in range(len(dists) - 2):  # exclude the trivial ref-vs-ref row
        if dists[i + 1] > dists[i] * (1.0 + noise_tol):
            monotone = False
            offending = (eps_list[i], eps_list[i + 1])
            break
    return EpsTable(eps_list, dists, monotone, offending)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_csv(path, header, rows, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_energy_csv(path, rows, config_hash: str) -> None:
    _write_csv(path, ["step", "t", "energy", "sup_norm", "newton_iters"],
               rows, config_hash)


def write_excess_csv(path, rows, config_hash: str) -> None:
    _write_csv(path, ["x0", "y0", "t0", "rho", "excess"], rows, config_hash)


def write_regime_csv(path, rows, config_hash: str) -> None:
    _write_csv(path, ["cylinder_id", "delta", "mu", "nu", "label",
                      "witness_angle"], rows, config_hash)


def write_modulus_csv(path, rows, config_hash: str) -> None:
    _write_csv(path, ["delta", "epsilon", "lag", "osc", "exponent_fit", "r2"],
               rows, config_hash)


def write_epsconv_csv(path, rows, config_hash: str) -> None:
    _write_csv(path, ["eps", "l2_distance_to_ref"], rows, config_hash)


@dataclass
class ExperimentReport:
    """Collected diagnostics of one configured run, tagged by config hash."""

    config_hash: str
    constants: dict = field(default_factory=dict)
    energy_tables: dict = field(default_factory=dict)
    excess_rows: list = field(default_factory=list)
    regime_rows: list = field(default_factory=list)
    modulus_rows: list = field(default_factory=list)
    epsconv_rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "constants": self.constants,
            "energy_tables": self.energy_tables,
            "excess": self.excess_rows,
            "regime": self.regime_rows,
            "modulus": self.modulus_rows,
            "epsconv": self.epsconv_rows,
            "verdicts": self.verdicts,
            "metadata": self.metadata,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
