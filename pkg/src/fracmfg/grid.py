"""Uniform symmetric 1D grid with weight vectors and discrete calculus.

All solvers in this package share the same truncated computational domain
[-x_max, x_max] with an odd number of nodes so that the origin is a node.
Grid functions are plain 1D numpy arrays of length ``grid.n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [-x_max, x_max] with n nodes (n odd, origin a node)."""

    x_max: float
    n: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n % 2 == 0:
            raise ValueError(f"grid needs an odd node count, got n={self.n}")
        if self.n < 9:
            raise ValueError(f"grid needs n >= 9, got n={self.n}")
        if not self.x_max > 0:
            raise ValueError(f"grid needs x_max > 0, got {self.x_max}")
        h = 2.0 * self.x_max / (self.n - 1)
        # build symmetric nodes from the integer index so +/- pairs are exact
        idx = np.arange(self.n) - (self.n - 1) // 2
        nodes = idx * h
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)

    @property
    def center(self) -> int:
        """Index of the node at x=0."""
        return (self.n - 1) // 2

    def weight(self, k: float) -> np.ndarray:
        """Weight vector <x_i>^k with <x> = sqrt(1 + x^2); k >= 0."""
        if k < 0:
            raise ValueError(f"weight exponent must be >= 0, got k={k}")
        return np.sqrt(1.0 + self.nodes**2) ** k

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Second-order gradient: centered inside, one-sided at the two ends."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"grid function has shape {f.shape}, expected ({self.n},)")
        g = np.empty_like(f)
        h = self.h
        g[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
        g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        g[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
        return g

    def quadrature(self, f: np.ndarray, w: np.ndarray | None = None) -> float:
        """Trapezoid rule of f (optionally times a weight vector) over the grid."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"grid function has shape {f.shape}, expected ({self.n},)")
        g = f if w is None else f * w
        return self.h * (g.sum() - 0.5 * (g[0] + g[-1]))

    def measure_sum(self, f: np.ndarray, w: np.ndarray | None = None) -> float:
        """Uniform node-weight pairing h * sum(f * w).

        This is the inner product under which the forward density step is the
        exact transpose of the backward step, so it is the mass/moment
        convention for discrete measures (jump mass folded onto the boundary
        nodes is counted in full, unlike under the trapezoid rule).
        """
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"grid function has shape {f.shape}, expected ({self.n},)")
        g = f if w is None else f * w
        return self.h * float(g.sum())


def make_grid(x_max: float, n: int) -> Grid:
    return Grid(x_max=x_max, n=n)


def weighted_quadrature(grid: Grid, f: np.ndarray, w: np.ndarray) -> float:
    return grid.quadrature(f, w)
