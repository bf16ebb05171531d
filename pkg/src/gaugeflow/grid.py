"""Uniform tensor-product grids and the forward-difference calculus on them.

Nodes include both endpoints of each axis, so spacing is (x1 - x0)/(nx - 1).
Each cell is addressed by its lower-left ("base") node; cell quantities such
as discrete gradients live on the (nx-1, ny-1) cell array.  Mass and source
terms are lumped at cell base nodes, which keeps the adjoint of the cell
gradient exact and purely index-shifted.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("grid rectangle must have positive extent")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least two nodes per axis")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def xs(self):
        return np.linspace(self.x0, self.x1, self.nx)

    def ys(self):
        return np.linspace(self.y0, self.y1, self.ny)

    def nodes(self):
        return np.meshgrid(self.xs(), self.ys(), indexing="ij")

    def cell_base_points(self):
        """Coordinates of the lower-left node of every cell."""
        return np.meshgrid(self.xs()[:-1], self.ys()[:-1], indexing="ij")

    def cell_centers(self):
        cx = self.xs()[:-1] + 0.5 * self.hx
        cy = self.ys()[:-1] + 0.5 * self.hy
        return np.meshgrid(cx, cy, indexing="ij")


def cell_gradients(grid: Grid, u: np.ndarray):
    """Forward-difference gradient of nodal values, one pair per cell."""
    gx = (u[1:, :-1] - u[:-1, :-1]) / grid.hx
    gy = (u[:-1, 1:] - u[:-1, :-1]) / grid.hy
    return gx, gy


def neg_divergence(grid: Grid, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Exact adjoint of ``cell_gradients`` up to the cell-area factor.

    Maps cell fluxes (fx, fy) to nodal values so that for all nodal w
    sum_cells (fx*Dx w + fy*Dy w) == sum_nodes neg_divergence(fx, fy) * w.
    """
    out = np.zeros((grid.nx, grid.ny))
    out[:-1, :-1] -= fx / grid.hx
    out[1:, :-1] += fx / grid.hx
    out[:-1, :-1] -= fy / grid.hy
    out[:-1, 1:] += fy / grid.hy
    return out


def node_average(grid: Grid, cellvals: np.ndarray) -> np.ndarray:
    """Average a cell quantity onto nodes (adjacent-cell mean, 1-4 cells)."""
    nx, ny = grid.nx, grid.ny
    acc = np.zeros((nx, ny))
    cnt = np.zeros((nx, ny))
    for di in (0, 1):
        for dj in (0, 1):
            acc[di:di + nx - 1, dj:dj + ny - 1] += cellvals
            cnt[di:di + nx - 1, dj:dj + ny - 1] += 1.0
    return acc / cnt


def l2_cell_norm(grid: Grid, w: np.ndarray) -> float:
    """Discrete L2 norm of nodal values, lumped at cell base nodes."""
    base = w[:-1, :-1]
    return float(np.sqrt(np.sum(base * base) * grid.cell_area))


def interior_mask(grid: Grid) -> np.ndarray:
    m = np.zeros((grid.nx, grid.ny), dtype=bool)
    m[1:-1, 1:-1] = True
    return m


@dataclass
class GridField:
    """A scalar field sampled at grid nodes over a sequence of time levels.

    values has shape (len(times), nx, ny).
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.times.shape[0], self.grid.nx, self.grid.ny)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match {expected}"
            )

    @classmethod
    def from_function(cls, grid: Grid, times, fn) -> "GridField":
        times = np.asarray(times, dtype=float)
        X, Y = grid.nodes()
        vals = np.empty((times.shape[0], grid.nx, grid.ny))
        for k, t in enumerate(times):
            vals[k] = fn(X, Y, t)
        return cls(grid, times, vals)

    def slice_at(self, k: int) -> np.ndarray:
        return self.values[k]

    def save(self, path) -> None:
        geom = np.array(
            [self.grid.x0, self.grid.x1, self.grid.y0, self.grid.y1,
             self.grid.nx, self.grid.ny]
        )
        np.savez_compressed(path, geometry=geom, times=self.times,
                            values=self.values)

    @classmethod
    def load(cls, path) -> "GridField":
        with np.load(path) as data:
            geom = data["geometry"]
            grid = Grid(float(geom[0]), float(geom[1]), float(geom[2]),
                        float(geom[3]), int(geom[4]), int(geom[5]))
            return cls(grid, data["times"], data["values"])

    def snapshot_csv(self, path, k: int) -> None:
        """Write one time slice as x,y,value rows (17 significant digits)."""
        xs = self.grid.xs()
        ys = self.grid.ys()
        sl = self.values[k]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "value"])
            for i in range(self.grid.nx):
                for j in range(self.grid.ny):
                    writer.writerow(
                        ["%.17g" % xs[i], "%.17g" % ys[j], "%.17g" % sl[i, j]]
                    )


def replace_slice(field: GridField, k: int, vals: np.ndarray) -> GridField:
    out = np.array(field.values)
    out[k] = vals
    return dataclasses.replace(field, values=out)
