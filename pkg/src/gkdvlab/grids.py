"""Uniform 1-D grids and sampled profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [left, right] with n_points samples (endpoints included)."""

    left: float
    right: float
    n_points: int

    def __post_init__(self):
        if not self.left < self.right:
            raise ValueError(f"need left < right, got [{self.left}, {self.right}]")
        if self.n_points < 16:
            raise ValueError(f"need n_points >= 16, got {self.n_points}")

    @property
    def h(self) -> float:
        return (self.right - self.left) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.left, self.right, self.n_points)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return abs(self.left + self.right) < tol


def symmetric_grid(half_width: float = 40.0, n_points: int = 6401) -> GridSpec:
    """Reference symmetric grid used for operator solves and quadrature checks."""
    return GridSpec(-half_width, half_width, n_points)


@dataclass
class Profile:
    """Real-valued function sampled on a grid, with its limits at -/+ infinity.

    Exponentially decaying profiles carry tail_left = tail_right = 0; the
    correction profiles built in :mod:`gkdvlab.linop` have nonzero constant
    limits coming from their Q'/Q and (1 + Q'/Q) parts.
    """

    grid: GridSpec
    values: np.ndarray
    tail_left: float = 0.0
    tail_right: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n_points} points)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile contains non-finite values")

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def integrate(self) -> float:
        # trapezoid is spectrally accurate here: every profile we integrate
        # decays to its constant tails well before the grid edge
        return float(np.trapezoid(self.values, dx=self.grid.h))

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.x, self.values]),
                   delimiter=",", header="x,value", comments="")
