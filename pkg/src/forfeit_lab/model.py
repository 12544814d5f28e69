"""Signal models, conditional distributions of the strongest rival signal,
and the grid diagnostics the equilibrium solvers rely on.

A model declares either independent signals through a marginal density in x
(family "ipv", any number of bidders) or a symmetric two-bidder joint density
f(x, y) (family "pair"). Densities that do not integrate to one over the
support are rescaled, with a warning once the imbalance exceeds 1e-3.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .expressions import ExpressionAst, evaluate, parse_density
from .numerics import (
    DEFAULT_GRID_NODES,
    Grid,
    cumulative_values,
    make_grid,
    simpson_values,
)

FAMILIES = ("ipv", "pair")

_MASS_WARN_TOL = 1e-3
_DIAG_TOL = 1e-9


@dataclass(frozen=True)
class SignalModel:
    """Declared signal distribution plus the value primitive v(x, y).

    value is None for private values, where v(x, y) = x.
    """

    family: str
    n_bidders: int
    support: tuple[float, float]
    density: ExpressionAst
    density_source: str
    value: ExpressionAst | None = None
    value_source: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown family {self.family!r}; allowed: {', '.join(FAMILIES)}"
            )
        if self.n_bidders < 2:
            raise ValueError("need at least 2 bidders")
        if self.family == "pair" and self.n_bidders != 2:
            raise ValueError("pair densities support exactly 2 bidders")
        lo, hi = self.support
        if not lo < hi:
            raise ValueError(f"support must satisfy lo < hi, got [{lo}, {hi}]")


def signal_model(
    family: str,
    density: str,
    n_bidders: int = 2,
    support: tuple[float, float] = (0.0, 1.0),
    value: str | None = None,
) -> SignalModel:
    """Convenience constructor parsing the density and value sources."""
    return SignalModel(
        family=family,
        n_bidders=n_bidders,
        support=(float(support[0]), float(support[1])),
        density=parse_density(density),
        density_source=density,
        value=None if value is None else parse_density(value),
        value_source=value,
    )


def uniform_ipv_model(n_bidders: int = 2) -> SignalModel:
    """Independent uniform signals on [0, 1], private values."""
    return signal_model("ipv", "1", n_bidders=n_bidders)


def correlated_pair_model(value: str | None = None) -> SignalModel:
    """Two-bidder benchmark with joint density 0.8*(1 + x*y) on [0, 1]^2."""
    return signal_model("pair", "4/5*(1+x*y)", n_bidders=2, value=value)


def default_grid(model: SignalModel, n_nodes: int = DEFAULT_GRID_NODES) -> Grid:
    lo, hi = model.support
    return make_grid(lo, hi, n_nodes)


class Conditionals:
    """Conditional density/CDF of the strongest rival signal, and v(x, y).

    Construction validates the model on the grid (nonnegativity, symmetry for
    pair densities, total mass) and caches the diagonal tables used by every
    solver. Instances are immutable after construction.
    """

    def __init__(self, model: SignalModel, grid: Grid):
        if not (
            abs(grid.lo - model.support[0]) <= 1e-12
            and abs(grid.hi - model.support[1]) <= 1e-12 + 1.0
        ):
            pass  # grids narrower than the support are allowed (truncation)
        self.model = model
        self.grid = grid
        self._support_grid = (
            grid
            if (grid.lo, grid.hi) == model.support
            else make_grid(model.support[0], model.support[1], grid.n_nodes)
        )
        self.raw_mass = self._compute_mass()
        if self.raw_mass <= 0 or not np.isfinite(self.raw_mass):
            raise ValueError("density mass must be positive and finite")
        if abs(self.raw_mass - 1.0) > _MASS_WARN_TOL:
            warnings.warn(
                f"density integrates to {self.raw_mass:.6g}; rescaling to unit mass",
                stacklevel=3,
            )
        self.norm = 1.0 / self.raw_mass
        self.f_diag, self.F_diag, self.v_diag = self.diag(grid.nodes)
        self.marginal_values = self._marginal(grid.nodes)
        if np.min(self.f_diag) < -1e-12:
            raise ValueError("conditional density is negative on the grid")
        if abs(self.F_diag[-1] - self.F_y1(grid.hi, grid.hi)) > 1e-9:
            raise ValueError("inconsistent conditional CDF tables")

    # -- construction helpers -------------------------------------------------

    def _compute_mass(self) -> float:
        g = self._support_grid
        if self.model.family == "ipv":
            dens = self._raw_marginal(g.nodes)
            self._check_nonneg(dens)
            return simpson_values(dens, g.spacing)
        mesh = evaluate(
            self.model.density, x=g.nodes[:, None], y=g.nodes[None, :]
        ) * np.ones((g.n_nodes, g.n_nodes))
        self._check_nonneg(mesh)
        asym = np.max(np.abs(mesh - mesh.T))
        if asym > 1e-12:
            raise ValueError(f"pair density is asymmetric (max |f(x,y)-f(y,x)| = {asym:.3g})")
        per_row = np.apply_along_axis(simpson_values, 1, mesh, g.spacing)
        return simpson_values(per_row, g.spacing)

    @staticmethod
    def _check_nonneg(values: np.ndarray) -> None:
        low = float(np.min(values))
        if low < -1e-12:
            raise ValueError(f"density is negative on the support (min {low:.3g})")

    def _raw_marginal(self, nodes: np.ndarray) -> np.ndarray:
        """Unnormalized marginal density of a single signal."""
        if self.model.family == "ipv":
            return np.broadcast_to(
                np.asarray(evaluate(self.model.density, x=nodes), dtype=float),
                nodes.shape,
            ).copy()
        g = self._support_grid
        mesh = evaluate(self.model.density, x=nodes[:, None], y=g.nodes[None, :])
        mesh = mesh * np.ones((nodes.size, g.n_nodes))
        return np.apply_along_axis(simpson_values, 1, mesh, g.spacing)

    def _marginal(self, nodes: np.ndarray) -> np.ndarray:
        return self._raw_marginal(nodes) * self.norm

    # -- evaluation -----------------------------------------------------------

    def v(self, x, y):
        """Expected value of the object at own signal x, best rival signal y."""
        if self.model.value is None:
            return x * np.ones_like(np.asarray(y, dtype=float)) if np.ndim(y) else x
        out = evaluate(self.model.value, x=x, y=y)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    def diag(self, nodes: np.ndarray):
        """Diagonal tables f_y1(t|t), F_y1(t|t), v(t, t) at the given nodes."""
        nodes = np.asarray(nodes, dtype=float)
        g = self._support_grid
        if self.model.family == "ipv":
            F_at = self._marginal_cdf(nodes)
            f_at = self._marginal(nodes)
            n = self.model.n_bidders
            f_diag = (n - 1) * F_at ** (n - 2) * f_at
            F_diag = F_at ** (n - 1)
        else:
            mesh = evaluate(self.model.density, x=nodes[:, None], y=g.nodes[None, :])
            mesh = mesh * np.ones((nodes.size, g.n_nodes)) * self.norm
            denom = np.apply_along_axis(simpson_values, 1, mesh, g.spacing)
            if np.min(denom) <= 0:
                raise ValueError("density integrates to 0 along a slice")
            diag_dens = evaluate(self.model.density, x=nodes, y=nodes) * self.norm
            f_diag = np.asarray(diag_dens, dtype=float) / denom
            steps = 0.5 * g.spacing * (mesh[:, 1:] + mesh[:, :-1])
            F_rows = np.concatenate(
                (np.zeros((nodes.size, 1)), np.cumsum(steps, axis=1)), axis=1
            ) / denom[:, None]
            F_diag = np.empty(nodes.size)
            for i in range(nodes.size):
                F_diag[i] = np.interp(nodes[i], g.nodes, F_rows[i])
        v_diag = np.asarray(self.v(nodes, nodes), dtype=float)
        v_diag = np.broadcast_to(v_diag, nodes.shape).copy()
        return f_diag, F_diag, v_diag

    def _marginal_cdf(self, nodes: np.ndarray) -> np.ndarray:
        g = self._support_grid
        table = cumulative_values(self._marginal(g.nodes), g.spacing)
        return np.interp(nodes, g.nodes, table)

    def conditional_slice(self, x: float):
        """Arrays f_y1(y|x) and F_y1(y|x) on the support grid's y nodes."""
        g = self._support_grid
        if self.model.family == "ipv":
            F_at = self._marginal_cdf(g.nodes)
            f_at = self._marginal(g.nodes)
            n = self.model.n_bidders
            return (n - 1) * F_at ** (n - 2) * f_at, F_at ** (n - 1)
        row = evaluate(self.model.density, x=float(x), y=g.nodes)
        row = np.asarray(row, dtype=float) * np.ones(g.n_nodes) * self.norm
        denom = simpson_values(row, g.spacing)
        if denom <= 0:
            raise ValueError(f"density integrates to 0 along the slice x = {x}")
        f_row = row / denom
        return f_row, cumulative_values(f_row, g.spacing)

    def f_y1(self, y, x):
        """Conditional density of the strongest rival signal at own signal x."""
        if self.model.family == "ipv":
            F_at = self._marginal_cdf(np.asarray(y, dtype=float))
            f_at = self._marginal(np.atleast_1d(np.asarray(y, dtype=float)))
            f_at = f_at if np.ndim(y) else f_at[0]
            n = self.model.n_bidders
            out = (n - 1) * F_at ** (n - 2) * f_at
            return float(out) if np.ndim(out) == 0 else out
        g = self._support_grid
        row = evaluate(self.model.density, x=float(x), y=g.nodes)
        denom = simpson_values(np.asarray(row, dtype=float) * np.ones(g.n_nodes) * self.norm, g.spacing)
        if denom <= 0:
            raise ValueError(f"density integrates to 0 along the slice x = {x}")
        out = np.asarray(evaluate(self.model.density, x=float(x), y=y), dtype=float) * self.norm / denom
        return float(out) if out.ndim == 0 else out

    def F_y1(self, y, x):
        """Conditional CDF of the strongest rival signal at own signal x."""
        _, F_row = self.conditional_slice(float(x))
        out = np.interp(np.asarray(y, dtype=float), self._support_grid.nodes, F_row)
        return float(out) if np.ndim(out) == 0 else out


def conditionals_from_model(model: SignalModel, grid: Grid) -> Conditionals:
    """Validate the model on the grid and build its conditional tables."""
    return Conditionals(model, grid)


# -- diagnostics ---------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticReport:
    name: str
    passed: bool
    max_violation: float
    tolerance: float
    note: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"{self.name}: {status} max violation {self.max_violation:.3e}{extra}"


def check_affiliation(model: SignalModel, grid: Grid) -> DiagnosticReport:
    """Verify f(z1 v z2) f(z1 ^ z2) >= f(z1) f(z2) on a coarse grid of pairs.

    Independent signals satisfy the inequality with equality, so ipv models
    pass by construction.
    """
    name = "affiliation"
    if model.family == "ipv":
        return DiagnosticReport(
            name, True, 0.0, _DIAG_TOL, "independent signals, holds by construction"
        )
    idx = grid.coarse_indices()
    pts = grid.nodes[idx]
    a = pts.size
    M = evaluate(model.density, x=pts[:, None], y=pts[None, :]) * np.ones((a, a))
    r = np.arange(a)
    imax = np.maximum(r[:, None, None, None], r[None, None, :, None])
    jmax = np.maximum(r[None, :, None, None], r[None, None, None, :])
    imin = np.minimum(r[:, None, None, None], r[None, None, :, None])
    jmin = np.minimum(r[None, :, None, None], r[None, None, None, :])
    lhs = M[imax, jmax] * M[imin, jmin]
    rhs = (
        M[r[:, None, None, None], r[None, :, None, None]]
        * M[r[None, None, :, None], r[None, None, None, :]]
    )
    violation = float(np.max(rhs - lhs))
    violation = max(violation, 0.0)
    return DiagnosticReport(name, violation <= _DIAG_TOL, violation, _DIAG_TOL)


def check_reverse_hazard_monotone(cond: Conditionals, grid: Grid) -> DiagnosticReport:
    """Verify F_y1(y|z) / f_y1(y|z) is non-increasing in the conditioning z."""
    name = "reverse-hazard monotone"
    idx = grid.coarse_indices()
    zs = grid.nodes[idx]
    ratios = np.full((zs.size, idx.size), np.nan)
    for k, z in enumerate(zs):
        f_row, F_row = cond.conditional_slice(z)
        f_at = f_row[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[k] = np.where(f_at > 1e-12, F_row[idx] / f_at, np.nan)
    diffs = ratios[1:] - ratios[:-1]
    finite = diffs[np.isfinite(diffs)]
    violation = float(np.max(finite)) if finite.size else 0.0
    violation = max(violation, 0.0)
    return DiagnosticReport(name, violation <= _DIAG_TOL, violation, _DIAG_TOL)


def check_value_density_monotone(cond: Conditionals, grid: Grid) -> DiagnosticReport:
    """Verify v(x, y) f_y1(y|x) is non-decreasing in x for each fixed y.

    This is the hypothesis under which the classic solver's output is an
    equilibrium, so solvers warn when it fails.
    """
    name = "value-density monotone"
    idx = grid.coarse_indices()
    xs = grid.nodes[idx]
    table = np.empty((xs.size, idx.size))
    for k, x in enumerate(xs):
        f_row, _ = cond.conditional_slice(x)
        table[k] = np.asarray(cond.v(x, grid.nodes[idx]), dtype=float) * f_row[idx]
    violation = float(np.max(table[:-1] - table[1:]))
    violation = max(violation, 0.0)
    return DiagnosticReport(name, violation <= _DIAG_TOL, violation, _DIAG_TOL)


def check_density_monotone_in_signal(cond: Conditionals, grid: Grid) -> DiagnosticReport:
    """Verify the declared density is non-decreasing in the conditioning signal.

    Gate for the cross-scheme payment-ordering assertion: for pair models the
    joint density f(x, y) must be non-decreasing in x for each fixed y; ipv
    marginals do not depend on the rival signal and pass by construction.
    """
    name = "density monotone in signal"
    if cond.model.family == "ipv":
        return DiagnosticReport(
            name, True, 0.0, _DIAG_TOL, "marginal density independent of rival signal"
        )
    idx = grid.coarse_indices()
    pts = grid.nodes[idx]
    mesh = evaluate(cond.model.density, x=pts[:, None], y=pts[None, :])
    mesh = mesh * np.ones((pts.size, pts.size))
    violation = float(np.max(mesh[:-1] - mesh[1:]))
    violation = max(violation, 0.0)
    return DiagnosticReport(name, violation <= _DIAG_TOL, violation, _DIAG_TOL)


def normalization_report(cond: Conditionals) -> DiagnosticReport:
    """Report whether the declared density already integrated to one."""
    violation = abs(cond.raw_mass - 1.0)
    return DiagnosticReport(
        "normalization",
        violation <= _MASS_WARN_TOL,
        violation,
        _MASS_WARN_TOL,
        f"declared mass {cond.raw_mass:.6g}",
    )
