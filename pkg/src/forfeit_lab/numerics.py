"""Shared numeric substrate: uniform grids, running quadrature, fixed-step RK4,
and monotone tabulated functions with piecewise-linear evaluation and inversion.

Conventions used throughout the package:

- cumulative integrals use the composite trapezoid rule, so every grid node
  carries a value and any affine integrand is integrated exactly;
- single-shot definite integrals use composite Simpson (grids therefore keep
  an odd node count);
- interpolation is piecewise linear everywhere, which preserves monotonicity
  and makes tabulated inverses well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_GRID_NODES = 2049

# relative slack applied to range checks so roundoff at the support edges
# does not trip the out-of-range errors
_EDGE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform, strictly increasing grid with an odd number of nodes."""

    lo: float
    hi: float
    nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_nodes - 1)

    def coarse_indices(self, max_nodes: int = 33) -> np.ndarray:
        """Indices of an evenly spread sub-grid (endpoints included)."""
        count = min(self.n_nodes, max_nodes)
        return np.unique(np.round(np.linspace(0, self.n_nodes - 1, count)).astype(int))

    def half_step_nodes(self) -> np.ndarray:
        """Lattice containing all nodes plus cell midpoints (RK4 stage points)."""
        return np.linspace(self.lo, self.hi, 2 * self.n_nodes - 1)


def make_grid(lo: float, hi: float, n_nodes: int) -> Grid:
    """Build a uniform grid on [lo, hi].

    n_nodes must be odd and at least 3 (composite Simpson needs an even
    number of cells).
    """
    lo = float(lo)
    hi = float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("grid bounds must be finite")
    if lo >= hi:
        raise ValueError(f"grid bounds must satisfy lo < hi, got [{lo}, {hi}]")
    if n_nodes < 3:
        raise ValueError(f"grid needs at least 3 nodes, got {n_nodes}")
    if n_nodes % 2 == 0:
        raise ValueError(f"grid node count must be odd, got {n_nodes}")
    nodes = np.linspace(lo, hi, n_nodes)
    nodes.setflags(write=False)
    return Grid(lo=lo, hi=hi, nodes=nodes)


@dataclass(frozen=True, eq=False)
class TabulatedFunction:
    """Function tabulated on a grid, evaluated by piecewise-linear interpolation.

    The inverse is defined only when the tabulated values are strictly
    increasing.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"values length {self.values.size} does not match "
                f"grid length {self.grid.n_nodes}"
            )

    @property
    def is_strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        slack = _EDGE_SLACK * max(abs(self.grid.lo), abs(self.grid.hi), 1.0)
        if np.any(x < self.grid.lo - slack) or np.any(x > self.grid.hi + slack):
            raise ValueError(
                f"query outside [{self.grid.lo}, {self.grid.hi}]: {x!r}"
            )
        out = np.interp(x, self.grid.nodes, self.values)
        return float(out) if out.ndim == 0 else out

    def inverse(self, y):
        if not self.is_strictly_increasing:
            raise ValueError("inverse undefined: table is not strictly increasing")
        y = np.asarray(y, dtype=float)
        lo_v, hi_v = self.values[0], self.values[-1]
        slack = _EDGE_SLACK * max(abs(lo_v), abs(hi_v), 1.0)
        if np.any(y < lo_v - slack) or np.any(y > hi_v + slack):
            raise ValueError(f"inverse query outside [{lo_v}, {hi_v}]: {y!r}")
        out = np.interp(y, self.values, self.grid.nodes)
        return float(out) if out.ndim == 0 else out


def cumulative_values(f_values: np.ndarray, spacing: float) -> np.ndarray:
    """Running trapezoid integral of uniformly spaced samples; starts at 0."""
    f_values = np.asarray(f_values, dtype=float)
    steps = 0.5 * spacing * (f_values[1:] + f_values[:-1])
    return np.concatenate(([0.0], np.cumsum(steps)))


def cumulative_integral(f_values, grid: Grid) -> TabulatedFunction:
    """Tabulate G(x) = integral of f from grid.lo to x (composite trapezoid).

    Exact for affine integrands; O(h^2) otherwise.
    """
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != grid.nodes.shape:
        raise ValueError(
            f"integrand length {f_values.size} does not match grid length {grid.n_nodes}"
        )
    return TabulatedFunction(grid, cumulative_values(f_values, grid.spacing))


def definite_integral(f_values, grid: Grid) -> float:
    """Composite Simpson integral over the whole grid (odd node count)."""
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != grid.nodes.shape:
        raise ValueError(
            f"integrand length {f_values.size} does not match grid length {grid.n_nodes}"
        )
    return simpson_values(f_values, grid.spacing)


def simpson_values(f_values: np.ndarray, spacing: float) -> float:
    f_values = np.asarray(f_values, dtype=float)
    if f_values.size % 2 == 0 or f_values.size < 3:
        raise ValueError("composite Simpson needs an odd sample count >= 3")
    return float(
        spacing
        / 3.0
        * (
            f_values[0]
            + f_values[-1]
            + 4.0 * f_values[1:-1:2].sum()
            + 2.0 * f_values[2:-2:2].sum()
        )
    )


def rk4_solve(
    rhs: Callable[[float, float], float],
    x0: float,
    alpha0: float,
    grid: Grid,
) -> TabulatedFunction:
    """Classical fourth-order Runge-Kutta with step equal to the grid spacing.

    Parameters
    ----------
    rhs : callable
        Right-hand side of alpha'(x) = rhs(x, alpha).
    x0, alpha0 : float
        Initial condition; x0 must coincide with grid.lo.
    grid : Grid
        Nodes at which the solution is tabulated.
    """
    if abs(x0 - grid.lo) > _EDGE_SLACK * max(abs(grid.lo), 1.0):
        raise ValueError(f"initial point {x0} does not match grid.lo {grid.lo}")
    h = grid.spacing
    values = np.empty(grid.n_nodes)
    values[0] = alpha0
    a = float(alpha0)
    def _eval(x: float, alpha: float) -> float:
        d = rhs(x, alpha)
        if not np.isfinite(d):
            raise ValueError(f"non-finite derivative at x = {x:.6g}")
        return d

    for k in range(grid.n_nodes - 1):
        x = grid.nodes[k]
        k1 = _eval(x, a)
        k2 = _eval(x + 0.5 * h, a + 0.5 * h * k1)
        k3 = _eval(x + 0.5 * h, a + 0.5 * h * k2)
        k4 = _eval(x + h, a + h * k3)
        a = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[k + 1] = a
    return TabulatedFunction(grid, values)
