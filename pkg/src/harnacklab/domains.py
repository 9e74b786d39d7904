"""Analytic state functions used as test domains."""

from __future__ import annotations

import numpy as np

from .grid import Grid, ScalarField, build_grid, state_field


def halfspace(grid: Grid, c: float = 1.0) -> ScalarField:
    """phi = c * max(x_d, 0)."""
    return state_field(grid, c * np.maximum(grid.coords[-1], 0.0))


def sector(grid: Grid) -> ScalarField:
    """phi = 2 x_1 x_2 on the quarter sector {x_1 > 0, x_2 > 0}; homogeneous of degree 2."""
    x1, x2 = grid.coords[0], grid.coords[1]
    return state_field(grid, 2 * np.maximum(x1, 0) * np.maximum(x2, 0))


def ball(grid: Grid, radius: float = 0.5, center=None) -> ScalarField:
    """phi = (radius - |x - center|)^+, a ball compactly inside B_1."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    return state_field(grid, np.maximum(radius - grid.distances_from(c), 0.0))


def two_bump(grid: Grid, offset: float = 0.5, radius: float = 0.35, a: float = 0.0) -> ScalarField:
    """(x_d - a)^+ restricted to two disjoint balls centred at (+-offset, 0, ..., a)."""
    vals = np.zeros(grid.shape)
    xd = grid.coords[-1]
    for s in (-1, 1):
        c = np.zeros(grid.dim)
        c[0] = s * offset
        c[-1] = a
        inside = grid.distances_from(c) < radius
        vals = np.where(inside, np.maximum(xd - a, 0.0), vals)
    return state_field(grid, vals)


def plateau(grid: Grid, level: float = 0.05) -> ScalarField:
    """min(max(x_d, 0), level): flat top of positive measure."""
    return state_field(grid, np.minimum(np.maximum(grid.coords[-1], 0.0), level))


def quadratic_halfspace(grid: Grid) -> ScalarField:
    """max(x_d, 0)^2: degenerate slope at the boundary."""
    return state_field(grid, np.maximum(grid.coords[-1], 0.0) ** 2)


def bump(grid: Grid) -> ScalarField:
    """1 - |x|^2, strictly superharmonic."""
    return state_field(grid, 1.0 - grid.radius**2)


BUILTINS = {
    "halfspace": halfspace,
    "sector": sector,
    "ball": ball,
    "two-bump": two_bump,
    "plateau": plateau,
    "quadratic": quadratic_halfspace,
    "bump": bump,
}


def builtin(name: str, dim: int, n: int, **kwargs) -> ScalarField:
    try:
        fn = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin domain {name!r}; choose from {sorted(BUILTINS)}") from None
    return fn(build_grid(dim, n), **kwargs)
