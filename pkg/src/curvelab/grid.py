"""Uniform 2-D grids and boolean occupancy masks.

The grid is the discretization carrier for everything else: scalar level-set
fields live on its nodes, sets are node masks.  Array layout is (ny, nx),
row-major, with node (i, j) at ``origin + dx * (i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = ["Grid2D", "GridSet", "FOUR_CONNECTED", "EIGHT_CONNECTED"]

# Connectivity convention: 4-connectivity for complement components,
# 8-connectivity for set components (standard duality on the square lattice).
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class Grid2D:
    """Uniform square-cell grid: nx*ny nodes, spacing dx, lower-left origin."""

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not self.dx > 0:
            raise ValueError(f"grid spacing must be positive, got {self.dx}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def xs(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.origin[1] + self.dx * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs(), self.ys())

    def node_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the node whose cell contains (x, y); clipped to the grid."""
        i = int(round((x - self.origin[0]) / self.dx))
        j = int(round((y - self.origin[1]) / self.dx))
        return (min(max(j, 0), self.ny - 1), min(max(i, 0), self.nx - 1))

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) spanned by the nodes."""
        return (
            self.origin[0],
            self.origin[0] + self.dx * (self.nx - 1),
            self.origin[1],
            self.origin[1] + self.dx * (self.ny - 1),
        )

    def same_layout(self, other: "Grid2D") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and abs(self.dx - other.dx) <= 1e-12 * self.dx
            and abs(self.origin[0] - other.origin[0]) <= 1e-9
            and abs(self.origin[1] - other.origin[1]) <= 1e-9
        )


@dataclass
class GridSet:
    """A closed set represented by its node occupancy mask on a Grid2D.

    Distance transforms are cached; the mask must not be mutated in place
    (all operations return fresh GridSets).
    """

    grid: Grid2D
    mask: np.ndarray
    _edt_in: np.ndarray | None = field(default=None, repr=False, compare=False)
    _edt_out: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mask.shape != self.grid.shape:
            raise ValueError(
                f"mask shape {self.mask.shape} does not match grid {self.grid.shape}"
            )
        if self.mask.dtype != np.bool_:
            self.mask = self.mask.astype(bool)

    # -- basic queries ---------------------------------------------------

    def is_empty(self) -> bool:
        return not self.mask.any()

    def is_full(self) -> bool:
        return bool(self.mask.all())

    def area(self) -> float:
        return float(self.mask.sum()) * self.grid.dx**2

    def contains_point(self, x: float, y: float) -> bool:
        j, i = self.grid.node_of(x, y)
        return bool(self.mask[j, i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridSet):
            return NotImplemented
        return self.grid.same_layout(other.grid) and np.array_equal(self.mask, other.mask)

    # -- distance transforms ----------------------------------------------

    def edt_in(self) -> np.ndarray:
        """Distance from every node to the nearest node outside the set.

        Zero outside the set.  Exact Euclidean, in physical units.
        """
        if self._edt_in is None:
            self._edt_in = ndimage.distance_transform_edt(
                self.mask, sampling=self.grid.dx
            )
        return self._edt_in

    def edt_out(self) -> np.ndarray:
        """Distance from every node to the nearest node of the set (0 inside)."""
        if self._edt_out is None:
            if self.is_empty():
                self._edt_out = np.full(self.grid.shape, np.inf)
            else:
                self._edt_out = ndimage.distance_transform_edt(
                    ~self.mask, sampling=self.grid.dx
                )
        return self._edt_out

    def dist_to(self, x: float, y: float) -> float:
        """dist((x,y), S) evaluated at the containing node (exact EDT)."""
        j, i = self.grid.node_of(x, y)
        return float(self.edt_out()[j, i])

    # -- component services -----------------------------------------------

    def components(self, connectivity: int = 8) -> tuple[np.ndarray, int]:
        structure = EIGHT_CONNECTED if connectivity == 8 else FOUR_CONNECTED
        return ndimage.label(self.mask, structure=structure)

    def complement_components(self) -> tuple[np.ndarray, int, np.ndarray]:
        """Label complement components (4-connectivity).

        Returns (labels, n, touches_boundary) where touches_boundary[k] is True
        for the 1-based label k+1 when that component meets the grid boundary
        (treated as unbounded).
        """
        labels, n = ndimage.label(~self.mask, structure=FOUR_CONNECTED)
        touches = np.zeros(n, dtype=bool)
        if n:
            edge = np.concatenate(
                [labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]
            )
            edge = edge[edge > 0]
            touches[np.unique(edge) - 1] = True
        return labels, n, touches

    # -- constructors -----------------------------------------------------

    @classmethod
    def empty(cls, grid: Grid2D) -> "GridSet":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid: Grid2D) -> "GridSet":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def disk(cls, grid: Grid2D, center: tuple[float, float], radius: float) -> "GridSet":
        X, Y = grid.meshgrid()
        return cls(grid, (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius**2)

    @classmethod
    def rectangle(
        cls, grid: Grid2D, xmin: float, xmax: float, ymin: float, ymax: float
    ) -> "GridSet":
        X, Y = grid.meshgrid()
        return cls(grid, (X >= xmin) & (X <= xmax) & (Y >= ymin) & (Y <= ymax))

    @classmethod
    def halfplane(cls, grid: Grid2D, e: tuple[float, float], offset: float = 0.0) -> "GridSet":
        """Nodes with x.e <= offset."""
        X, Y = grid.meshgrid()
        return cls(grid, X * e[0] + Y * e[1] <= offset)

    @classmethod
    def stadium(
        cls,
        grid: Grid2D,
        e: tuple[float, float],
        h: float,
        half_length: float,
        face_offset: float = 0.0,
    ) -> "GridSet":
        """Segment of the given half-length dilated by h, its far face on
        {x.e = face_offset} (the segment center sits at (face_offset - h) e)."""
        ex, ey = e
        n = (ex * ex + ey * ey) ** 0.5
        ex, ey = ex / n, ey / n
        tx, ty = -ey, ex
        X, Y = grid.meshgrid()
        px = X - (face_offset - h) * ex
        py = Y - (face_offset - h) * ey
        along = px * tx + py * ty
        across = px * ex + py * ey
        over = along - np.clip(along, -half_length, half_length)
        return cls(grid, over * over + across * across <= h * h + 1e-9 * grid.dx)

    @classmethod
    def from_mask(cls, grid: Grid2D, mask: np.ndarray) -> "GridSet":
        return cls(grid, np.asarray(mask, dtype=bool).copy())

    def with_mask(self, mask: np.ndarray) -> "GridSet":
        return GridSet(self.grid, mask)
