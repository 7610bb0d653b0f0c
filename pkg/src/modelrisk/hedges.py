"""Piecewise-linear hedge functions of the first-period price."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class HedgeFunction:
    """Nodal values on a sorted grid; linear in between, constant outside."""

    grid: np.ndarray
    values: np.ndarray
    name: str = "h"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or v.shape != g.shape or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("hedge needs a strictly increasing grid and one value per node")
        if not np.all(np.isfinite(v)):
            raise ValueError("hedge values must be finite")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)

    def derivative(self, x):
        """Slope of the cell containing x; zero outside the grid."""
        x = np.asarray(x, dtype=float)
        g = self.grid
        j = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        slope = np.diff(self.values) / np.diff(g)
        out = slope[j]
        return np.where((x < g[0]) | (x > g[-1]), 0.0, out)

    def nodal_derivative(self):
        return np.gradient(self.values, self.grid)

    def scaled(self, lam):
        return HedgeFunction(self.grid, lam * self.values, self.name)

    def on(self, grid):
        return HedgeFunction(np.asarray(grid, float), self(grid), self.name)

    def to_dict(self):
        return {"name": self.name, "grid": self.grid.tolist(), "values": self.values.tolist()}

    @classmethod
    def zero(cls, grid, name="h"):
        return cls(grid, np.zeros(len(grid)), name)


def cell_basis(grid, x):
    """Hat-basis coordinates with clamped extrapolation.

    Returns (left index, weight on left, weight on right, slope factor) such that
    h(x) = wl*c[j] + wr*c[j+1] and h'(x) = s*(c[j+1] - c[j]).
    """
    g = np.asarray(grid, dtype=float)
    x = np.asarray(x, dtype=float)
    j = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
    dx = g[j + 1] - g[j]
    t = np.clip((x - g[j]) / dx, 0.0, 1.0)
    s = np.where((x < g[0]) | (x > g[-1]), 0.0, 1.0 / dx)
    return j, 1.0 - t, t, s


@dataclass(frozen=True)
class TensorHedge:
    """Vector hedge R^d -> R^d, multilinear on a tensor grid, clamped outside."""

    grids: tuple
    values: np.ndarray  # shape (G_1, ..., G_d, d)
    name: str = "h"

    @property
    def dim(self):
        return len(self.grids)

    def _coords(self, x):
        return [cell_basis(g, x[:, k]) for k, g in enumerate(self.grids)]

    def __call__(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], self.dim))
        for idx, wt, _ in _corners(self._coords(x), self.dim):
            out += wt[:, None] * self.values[idx]
        return out

    def jacobian(self, x):
        """J[n, i, k] = d h_i / d x_k."""
        x = np.atleast_2d(x)
        coords = self._coords(x)
        J = np.zeros((x.shape[0], self.dim, self.dim))
        for idx, _, dwt in _corners(coords, self.dim):
            for k in range(self.dim):
                J[:, :, k] += dwt[k][:, None] * self.values[idx]
        return J


def _corners(coords, d):
    """Yield (index tuple, weight, per-axis weight derivatives) for each cell corner."""
    for bits in product((0, 1), repeat=d):
        idx, wt = [], 1.0
        parts = []
        for k, b in enumerate(bits):
            j, wl, wr, s = coords[k]
            idx.append(j + b)
            w = wr if b else wl
            parts.append((w, s if b else -s))
            wt = wt * w
        dwt = []
        for k in range(d):
            term = parts[k][1]
            for m in range(d):
                if m != k:
                    term = term * parts[m][0]
            dwt.append(term)
        yield tuple(idx), wt, dwt
