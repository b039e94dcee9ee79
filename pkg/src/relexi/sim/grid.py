"""Grid, flow state and solver configuration for the 1-D periodic domain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

BLOWUP_LIMIT = 1e6


class BlowUp(RuntimeError):
    """Velocity magnitude exceeded the instability threshold."""


class OutOfRangeCs(ValueError):
    """Smagorinsky coefficient outside the admissible [0, 0.5] range."""


class IncompatibleGrids(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid split into equal contiguous elements.

    Element e owns points [e*m, (e+1)*m) with m = n_points / n_elements;
    actions are one coefficient per element.
    """

    n_points: int
    n_elements: int = 1
    domain_length: float = TWO_PI

    def __post_init__(self):
        if self.n_points < 2 or self.n_points % 2 != 0:
            raise ValueError(f"n_points must be even and >= 2, got {self.n_points}")
        if self.n_elements < 1 or self.n_points % self.n_elements != 0:
            raise ValueError("n_elements must divide n_points")
        if self.n_points < 2 * self.n_elements:
            raise ValueError("need at least 2 points per element")

    @property
    def points_per_element(self) -> int:
        return self.n_points // self.n_elements

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_points

    @property
    def element_width(self) -> float:
        """Filter width Delta used by the eddy-viscosity closure."""
        return self.domain_length / self.n_elements

    @property
    def nyquist(self) -> int:
        return self.n_points // 2

    def x(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dx


@dataclass
class FlowField:
    grid: Grid
    u: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.u.shape != (self.grid.n_points,):
            raise ValueError(f"u has shape {self.u.shape}, grid expects "
                             f"({self.grid.n_points},)")

    def check_finite(self):
        if not np.all(np.isfinite(self.u)):
            raise BlowUp(f"non-finite velocity at t={self.time}")

    def copy(self) -> "FlowField":
        return FlowField(self.grid, self.u.copy(), self.time)

    def elements(self) -> np.ndarray:
        """View of u as (n_elements, points_per_element)."""
        g = self.grid
        return self.u.reshape(g.n_elements, g.points_per_element)


@dataclass(frozen=True)
class SolverConfig:
    """Physical and numerical parameters of the forced Burgers solver."""

    viscosity: float
    forcing_coefficient: float = 0.0
    dt: float = 1e-3
    dealias: bool = True

    def __post_init__(self):
        if self.viscosity < 0:
            raise ValueError("viscosity must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def dealias_cutoff(n_points: int, dealias: bool) -> int:
    """Highest retained wavenumber: 2/3 rule when dealiasing, Nyquist otherwise."""
    return n_points // 3 if dealias else n_points // 2
