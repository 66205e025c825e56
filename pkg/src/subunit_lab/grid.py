"""Rectangular grid description shared by all modules.

Nodes live at x_i = x0 + i*hx, y_j = y0 + j*hy with i in [0, nx), j in [0, ny).
Arrays over the grid are indexed [i, j] (x first).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class GridSpec:
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigError("grid needs at least 3 nodes per axis", "grid.nx/ny")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ConfigError("domain must have positive extent", "grid.domain")

    @property
    def hx(self):
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self):
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def diameter(self):
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    def xs(self):
        return self.x0 + self.hx * np.arange(self.nx)

    def ys(self):
        return self.y0 + self.hy * np.arange(self.ny)

    def meshgrid(self):
        return np.meshgrid(self.xs(), self.ys(), indexing="ij")

    def node_xy(self, node):
        i, j = node
        return (self.x0 + i * self.hx, self.y0 + j * self.hy)

    def nearest_node(self, x, y):
        i = int(round((x - self.x0) / self.hx))
        j = int(round((y - self.y0) / self.hy))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ConfigError(f"point ({x}, {y}) outside the grid", "grid")
        return (i, j)

    def contains_node(self, node):
        i, j = node
        return 0 <= i < self.nx and 0 <= j < self.ny

    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        return m

    def euclid_from(self, node):
        """Euclidean distance of every node to the given node."""
        cx, cy = self.node_xy(node)
        X, Y = self.meshgrid()
        return np.hypot(X - cx, Y - cy)

    def boundary_distance(self, node):
        """Euclidean distance from a node to the domain boundary."""
        x, y = self.node_xy(node)
        return min(x - self.x0, self.x1 - x, y - self.y0, self.y1 - y)

    def refine(self, factor=2):
        """Same domain, (roughly) factor x finer spacing, nodes kept aligned."""
        return GridSpec(self.x0, self.x1, self.y0, self.y1,
                        (self.nx - 1) * factor + 1, (self.ny - 1) * factor + 1)
