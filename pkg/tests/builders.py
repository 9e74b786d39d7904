"""Field constructions shared by several test modules."""

import numpy as np

from harnacklab.grid import ScalarField, build_grid, make_mask
from harnacklab.harmonic import DirichletProblem, solve, sphere_data


def holed_field(seed, n=129, level=None):
    """Harmonic off a few small holes near the origin, zero on the holes, constant data on the sphere.

    The data level is drawn from [0.2, 1] unless given, so 0 <= w <= 1.
    """
    g = build_grid(2, n)
    rng = np.random.default_rng(seed)
    holes = np.zeros(g.shape, dtype=bool)
    for _ in range(rng.integers(1, 5)):
        c = rng.uniform(-0.15, 0.15, size=2)
        holes |= g.distances_from(c) < rng.uniform(0.03, 0.09)
    mask = make_mask(g, g.in_ball & ~holes)
    top = rng.uniform(0.2, 1.0) if level is None else level
    w = solve(DirichletProblem(mask, sphere_data(mask, top + 0.0 * g.coords[0]), tol=1e-10))
    return ScalarField(g, np.where(g.in_ball, w.values, 0.0))
