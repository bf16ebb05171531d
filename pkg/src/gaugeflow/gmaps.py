"""Excess-truncation maps that cut out the degeneracy body.

G_delta(xi) = (gauge(xi) - (1+delta))_+ / gauge(xi) * xi  collapses the outer
parallel set {gauge <= 1+delta} to the origin and leaves the direction of
everything else unchanged.  Regularity of a degenerate flow is expressed
through G_delta of the gradient, never the raw gradient, so these maps and
their bi-Lipschitz certificates sit at the center of the analysis layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodies import ConvexBody, gauge_many


@dataclass(frozen=True)
class GDeltaMap:
    body: ConvexBody
    delta: float

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta < 0.0:
            raise ValueError(f"truncation offset delta must be >= 0, got {self.delta}")

    def apply(self, xi) -> np.ndarray:
        return self.apply_many(np.asarray(xi, dtype=float)[None, :])[0]

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        """Apply the map to rows of an (n, 2) array; the origin maps to 0."""
        pts = np.asarray(pts, dtype=float)
        g = gauge_many(self.body, pts)
        factor = np.zeros_like(g)
        nz = g > 0.0
        factor[nz] = np.maximum(g[nz] - (1.0 + self.delta), 0.0) / g[nz]
        return factor[:, None] * pts

    def forward_lipschitz_bound(self) -> float:
        """Certified Lipschitz constant 3 (R_E / r_E)^2 of the map."""
        ratio = self.body.r_outer / self.body.r_inner
        return 3.0 * ratio * ratio

    def inverse_lipschitz_bound(self) -> float:
        """Certified constant for the inverse estimate

            |xi - eta| <= bound * |G_0(xi) - G_0(eta)|

        valid whenever gauge(xi) >= 1 + delta; the right side uses the
        delta = 0 map.  Requires delta > 0.
        """
        if self.delta <= 0.0:
            raise ValueError("inverse estimate needs delta > 0")
        ratio = self.body.r_outer / self.body.r_inner
        return 3.0 * ratio * ratio * (1.0 + 1.0 / self.delta)

    def collapse_bound(self) -> float:
        """Advertised uniform bound delta / r_E on |G_delta - G_0|.

        Only attainable for bodies with r_E * R_E <= 1: the exact supremum of
        |G_delta(xi) - G_0(xi)| over xi is delta * R_E, which exceeds
        delta / r_E otherwise.  The constant is kept as stated so that the
        certificate suite reports the discrepancy instead of hiding it.
        """
        return self.delta / self.body.r_inner
