"""Densities over the boundary used to weight acquisition candidates."""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegeneratePriorError, StructuralError
from .nn import WeightVector, forward_many
from .tasks import Boundary

META = "meta"
UNIFORM = "uniform"
STANDARD_NORMAL = "standard_normal"
PRIOR_KINDS = (META, UNIFORM, STANDARD_NORMAL)

DEFAULT_GRID_SIZE = 1024
MIN_GRID_SIZE = 16
DENSITY_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class PriorDensity:
    grid: np.ndarray
    density: np.ndarray
    kind: str

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.float64)
        density = np.array(self.density, dtype=np.float64)
        if grid.shape != density.shape or grid.ndim != 1:
            raise StructuralError("grid and density must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise StructuralError("grid must be strictly increasing")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise StructuralError("density must be finite and non-negative")
        if self.kind not in PRIOR_KINDS:
            raise StructuralError(f"unknown prior kind {self.kind!r}")
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def pdf(self, x):
        """Linear interpolation of the density; zero outside the grid."""
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.density)])

    def integral(self) -> float:
        return float(trapezoid(self.density, self.grid))


def _normalized(grid, values, kind):
    return PriorDensity(grid, values / trapezoid(values, grid), kind)


def _check_grid_size(grid_size):
    if grid_size < MIN_GRID_SIZE:
        raise StructuralError(f"grid_size must be >= {MIN_GRID_SIZE}, got {grid_size}")


def from_network(theta: WeightVector, boundary: Boundary,
                 grid_size: int = DEFAULT_GRID_SIZE,
                 floor: float = DENSITY_FLOOR) -> PriorDensity:
    """Evaluate the network on a grid, floor it at ``floor`` and normalise.

    Raises DegeneratePriorError when the network is nowhere positive, since
    the result would be the floor alone and carry no information.
    """
    _check_grid_size(grid_size)
    grid = boundary.grid(grid_size)
    out = forward_many(theta, grid)
    if not np.any(out > 0):
        raise DegeneratePriorError("network output is non-positive across the whole boundary")
    return _normalized(grid, np.maximum(out, floor), META)


def uniform_prior(boundary: Boundary, grid_size: int = DEFAULT_GRID_SIZE) -> PriorDensity:
    _check_grid_size(grid_size)
    grid = boundary.grid(grid_size)
    return PriorDensity(grid, np.full(grid_size, 1.0 / boundary.width), UNIFORM)


def standard_normal_prior(boundary: Boundary,
                          grid_size: int = DEFAULT_GRID_SIZE) -> PriorDensity:
    _check_grid_size(grid_size)
    grid = boundary.grid(grid_size)
    return _normalized(grid, np.exp(-0.5 * grid * grid), STANDARD_NORMAL)


def baseline_prior(kind: str, boundary: Boundary,
                   grid_size: int = DEFAULT_GRID_SIZE) -> PriorDensity:
    if kind == UNIFORM:
        return uniform_prior(boundary, grid_size)
    if kind == STANDARD_NORMAL:
        return standard_normal_prior(boundary, grid_size)
    raise StructuralError(f"{kind!r} is not a baseline prior")
