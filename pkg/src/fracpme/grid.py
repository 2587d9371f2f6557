"""Uniform cell-centred meshes and cell-averaged fields on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh of ``n_cells`` cells on ``[-half_width, half_width]``."""

    half_width: float
    n_cells: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError(f"n_cells must be an integer >= 8, got {self.n_cells}")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @cached_property
    def centers(self) -> np.ndarray:
        x = -self.half_width + (np.arange(self.n_cells) + 0.5) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def faces(self) -> np.ndarray:
        x = -self.half_width + np.arange(self.n_cells + 1) * self.dx
        x.flags.writeable = False
        return x

    def scaled(self, factor: float) -> "Grid1D":
        """Same cell count, half-width multiplied by ``factor``."""
        return Grid1D(self.half_width * factor, self.n_cells)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.dx)


@dataclass(frozen=True, eq=False)
class Field:
    """Cell averages of a density on a :class:`Grid1D`.

    Values may be signed (differences of densities are fields too); physical
    states are checked for nonnegativity by the consumers that need it.
    """

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid1D) -> "Field":
        return cls(grid, np.zeros(grid.n_cells))

    @classmethod
    def from_function(cls, grid: Grid1D, func) -> "Field":
        """Point samples of ``func`` at the cell centres."""
        return cls(grid, func(grid.centers))

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def norm(self, p: float) -> float:
        v = np.abs(self.values)
        if np.isinf(p):
            return float(v.max())
        return float((np.sum(v**p) * self.grid.dx) ** (1.0 / p))

    def __add__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__


def check_same_grid(*fields: Field) -> Grid1D:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grids differ: {grid} vs {f.grid}")
    return grid
