"""Convex degeneracy bodies and their gauge geometry.

A body is an open bounded convex set E in the plane containing the origin,
not necessarily symmetric.  Its Minkowski gauge

    |xi|_E = inf { t > 0 : xi in t*E }

is the anisotropic "norm" that drives the degenerate diffusions elsewhere in
this package: the flux vanishes wherever the gradient stays inside E.  Three
body kinds are supported: Euclidean balls, ellipsoids given by a quadratic
form, and convex polytopes given by vertices.

The dual gauge is the support function sup_{e in E} <xi, e>; boundary points
of the polar body are what the level-set analysis scans over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BALL = "euclidean_ball"
ELLIPSOID = "ellipsoid"
POLYTOPE = "polytope"

# relative tolerance of the scale bisection for polytope gauges
_BISECT_RTOL = 1e-12


@dataclass(frozen=True)
class ConvexBody:
    """Immutable body description plus precomputed geometry.

    ``halfplanes`` holds rows a_i with membership  max_i <a_i, x> <= 1
    (polytopes only).  ``r_inner``/``r_outer`` are the radii of the largest
    origin-centered ball inside E and the smallest one containing it.
    """

    kind: str
    radius: float = 0.0
    matrix: np.ndarray | None = None
    inv_matrix: np.ndarray | None = None
    vertices: np.ndarray | None = None
    halfplanes: np.ndarray | None = None
    r_inner: float = 0.0
    r_outer: float = 0.0
    meta: dict = field(default_factory=dict)

    def __repr__(self):  # short, params live in arrays
        return f"ConvexBody({self.kind}, r_E={self.r_inner:.6g}, R_E={self.r_outer:.6g})"


def ball(radius: float) -> ConvexBody:
    """Euclidean ball of the given radius centered at the origin."""
    radius = float(radius)
    if not radius > 0.0 or not np.isfinite(radius):
        raise ValueError(f"ball radius must be positive and finite, got {radius}")
    return ConvexBody(kind=BALL, radius=radius, r_inner=radius, r_outer=radius)


def ellipsoid(matrix) -> ConvexBody:
    """Ellipsoid { xi : xi . Q xi <= 1 } for a symmetric positive-definite Q."""
    q = np.asarray(matrix, dtype=float)
    if q.shape != (2, 2):
        raise ValueError(f"ellipsoid matrix must be 2x2, got shape {q.shape}")
    if not np.allclose(q, q.T, rtol=1e-12, atol=1e-12):
        raise ValueError("ellipsoid matrix must be symmetric")
    evals = np.linalg.eigvalsh(q)
    if evals[0] <= 0.0:
        raise ValueError(f"ellipsoid matrix must be positive definite, eigenvalues {evals}")
    # semi-axes are 1/sqrt(eigenvalue)
    return ConvexBody(
        kind=ELLIPSOID,
        matrix=q,
        inv_matrix=np.linalg.inv(q),
        r_inner=1.0 / np.sqrt(evals[1]),
        r_outer=1.0 / np.sqrt(evals[0]),
    )


def polytope(vertices) -> ConvexBody:
    """Convex polytope from a vertex list; the hull must contain 0 strictly.

    The half-plane representation is precomputed here once; gauge values are
    then obtained by bisection on the scale with half-plane membership tests.
    """
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ValueError("polytope vertices must be a nonempty (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("polytope vertices must be finite")
    hull = _convex_hull(pts)
    if hull.shape[0] < 3:
        raise ValueError("polytope is degenerate: hull has fewer than 3 vertices")

    scale = np.max(np.abs(hull))
    planes = []
    for k in range(hull.shape[0]):
        va = hull[k]
        vb = hull[(k + 1) % hull.shape[0]]
        d = vb - va
        n = np.array([d[1], -d[0]])  # outward for CCW ordering
        c = n @ va
        if c <= 1e-12 * scale * np.linalg.norm(n):
            raise ValueError("polytope must contain the origin strictly in its interior")
        planes.append(n / c)
    halfplanes = np.asarray(planes)

    body = ConvexBody(
        kind=POLYTOPE,
        vertices=hull,
        halfplanes=halfplanes,
        r_inner=float(np.min(1.0 / np.linalg.norm(halfplanes, axis=1))),
        r_outer=float(np.max(np.linalg.norm(hull, axis=1))),
    )
    _check_radii_sandwich(body)
    return body


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, CCW order, collinear points dropped."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]
    keep = np.ones(len(p), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(p, axis=0)) > 0, axis=1)
    p = p[keep]
    if len(p) < 3:
        return p

    eps = 1e-12 * max(1.0, np.max(np.abs(p)) ** 2)

    def build(seq):
        out = []
        for q in seq:
            while len(out) >= 2:
                cross = (out[-1][0] - out[-2][0]) * (q[1] - out[-2][1]) - (
                    out[-1][1] - out[-2][1]
                ) * (q[0] - out[-2][0])
                if cross <= eps:
                    out.pop()
                else:
                    break
            out.append(q)
        return out

    lower = build(p)
    upper = build(p[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def _check_radii_sandwich(body: ConvexBody, ndirs: int = 64) -> None:
    # sampled certificate that B_{r_E} subset E subset B_{R_E}
    ang = np.linspace(0.0, 2.0 * np.pi, ndirs, endpoint=False)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    g_in = gauge_many(body, body.r_inner * dirs)
    if np.any(g_in > 1.0 + 1e-9):
        raise ValueError("inner-radius certificate failed: inscribed ball escapes the body")
    g_dir = gauge_many(body, dirs)
    bdry = dirs / g_dir[:, None]
    if np.any(np.linalg.norm(bdry, axis=1) > body.r_outer * (1.0 + 1e-9)):
        raise ValueError("outer-radius certificate failed: body escapes the bounding ball")


def radii(body: ConvexBody) -> tuple[float, float]:
    """(r_E, R_E): largest inscribed and smallest enclosing origin ball radii."""
    return body.r_inner, body.r_outer


def gauge(body: ConvexBody, xi) -> float:
    """Minkowski gauge |xi|_E = inf{ t > 0 : xi in t*E }.

    Closed form for balls and ellipsoids; scale bisection against the
    half-plane membership predicate for polytopes (relative tolerance 1e-12).
    Positively one-homogeneous, gauge(0) = 0.
    """
    return float(gauge_many(body, np.asarray(xi, dtype=float)[None, :])[0])


def gauge_many(body: ConvexBody, pts: np.ndarray) -> np.ndarray:
    """Vectorized gauge over an (n, 2) array of points."""
    pts = np.asarray(pts, dtype=float)
    if body.kind == BALL:
        return np.hypot(pts[:, 0], pts[:, 1]) / body.radius
    if body.kind == ELLIPSOID:
        w = pts @ body.matrix
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", pts, w), 0.0))
    return _polytope_gauge(body, pts)


def _polytope_gauge(body: ConvexBody, pts: np.ndarray) -> np.ndarray:
    vals = pts @ body.halfplanes.T  # facet functionals, membership iff all <= t
    norms = np.hypot(pts[:, 0], pts[:, 1])
    nonzero = norms > 0.0
    lo = norms / body.r_outer * (1.0 - 1e-9)
    hi = norms / body.r_inner * (1.0 + 1e-9)
    for _ in range(200):
        gap_done = hi - lo <= _BISECT_RTOL * np.maximum(lo, 1e-300)
        if np.all(gap_done | ~nonzero):
            break
        mid = 0.5 * (lo + hi)
        inside = (vals <= mid[:, None]).all(axis=1)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out = 0.5 * (lo + hi)
    out[~nonzero] = 0.0
    return out


def dual_gauge(body: ConvexBody, xi) -> float:
    """Support function sup_{e in E} <xi, e> (the gauge of the polar body)."""
    return float(dual_gauge_many(body, np.asarray(xi, dtype=float)[None, :])[0])


def dual_gauge_many(body: ConvexBody, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if body.kind == BALL:
        return body.radius * np.hypot(pts[:, 0], pts[:, 1])
    if body.kind == ELLIPSOID:
        w = pts @ body.inv_matrix
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", pts, w), 0.0))
    # supremum over a polytope is attained at a vertex
    return np.max(pts @ body.vertices.T, axis=1)


@dataclass(frozen=True)
class DualSample:
    """Boundary sample of the polar body: points p with sup_{e in E} <p, e> = 1."""

    angles: np.ndarray
    points: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def sample_dual_boundary(body: ConvexBody, count: int) -> DualSample:
    """Sample ``count`` polar-boundary points at equispaced angles.

    Each returned point is d(theta) / sup_{e in E} <d(theta), e>, hence has
    dual gauge exactly 1.  Scanning <xi, p> over the sample recovers the gauge
    of xi up to the angular resolution.
    """
    count = int(count)
    if count < 4:
        raise ValueError(f"dual boundary sample needs count >= 4, got {count}")
    ang = 2.0 * np.pi * np.arange(count) / count
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    support = dual_gauge_many(body, dirs)
    pts = dirs / support[:, None]
    sup_check = dual_gauge_many(body, pts)
    if np.any(np.abs(sup_check - 1.0) > 1e-9):
        raise AssertionError("polar boundary sample failed its support-function certificate")
    return DualSample(angles=ang, points=pts)


def parallel_set_membership(body: ConvexBody, delta: float, xi) -> bool:
    """Whether xi lies in the closed outer parallel set { gauge <= 1 + delta }."""
    delta = float(delta)
    if delta < 0.0:
        raise ValueError(f"parallel-set offset must be >= 0, got {delta}")
    return gauge(body, xi) <= 1.0 + delta


# ---------------------------------------------------------------------------
# gauge derivatives (used by the integrand machinery; defined a.e.)


def gauge_grad_many(body: ConvexBody, pts: np.ndarray) -> np.ndarray:
    """Gradient of the gauge at each point, rows (n, 2).

    Balls/ellipsoids: smooth away from 0.  Polytopes: the active-facet
    functional (first argmax on ridges, where the gauge is not differentiable).
    Rows for the origin are returned as zero.
    """
    pts = np.asarray(pts, dtype=float)
    out = np.zeros_like(pts)
    if body.kind == BALL:
        s = np.hypot(pts[:, 0], pts[:, 1])
        nz = s > 0.0
        out[nz] = pts[nz] / (body.radius * s[nz, None])
        return out
    if body.kind == ELLIPSOID:
        w = pts @ body.matrix
        g = np.sqrt(np.maximum(np.einsum("ij,ij->i", pts, w), 0.0))
        nz = g > 0.0
        out[nz] = w[nz] / g[nz, None]
        return out
    vals = pts @ body.halfplanes.T
    active = np.argmax(vals, axis=1)
    out[:] = body.halfplanes[active]
    out[np.hypot(pts[:, 0], pts[:, 1]) == 0.0] = 0.0
    return out


def gauge_hess_many(body: ConvexBody, pts: np.ndarray) -> np.ndarray:
    """Hessian of the gauge, shape (n, 2, 2); zero rows at the origin.

    Polytope gauges are piecewise linear, so their Hessian vanishes a.e.
    """
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[0]
    out = np.zeros((n, 2, 2))
    if body.kind == POLYTOPE:
        return out
    if body.kind == BALL:
        s = np.hypot(pts[:, 0], pts[:, 1])
        nz = s > 0.0
        u = np.zeros_like(pts)
        u[nz] = pts[nz] / s[nz, None]
        proj = np.eye(2)[None, :, :] - u[:, :, None] * u[:, None, :]
        out[nz] = proj[nz] / (body.radius * s[nz])[:, None, None]
        return out
    w = pts @ body.matrix
    g = np.sqrt(np.maximum(np.einsum("ij,ij->i", pts, w), 0.0))
    nz = g > 0.0
    ww = w[:, :, None] * w[:, None, :]
    out[nz] = (body.matrix[None, :, :] - ww[nz] / (g[nz] ** 2)[:, None, None]) / g[nz][
        :, None, None
    ]
    return out
