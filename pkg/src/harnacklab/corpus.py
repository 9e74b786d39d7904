"""Irregular test domains from vectorial free-boundary minimizers.

Each design prescribes two-component data on |x| >= 1 with a first
component that is nonnegative and positive on an arc, and a second
component bounded by a multiple of the first. The modulus of the minimizer
is the state function; the free boundary crosses B_1/2 so boundary points
near the origin are available for local checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .freeboundary import FbProblem, FbSolution, boundary_vector, minimize
from .grid import ScalarField, build_grid, mask_from_state


def _pos(a):
    return np.maximum(a, 0.0)


# every design is (first component, second component) as functions of (x1, x2, ...)
DESIGNS = {
    "tilted": (
        lambda *x: 1.2 * _pos(x[-1] + 0.2 * x[0]) * (1 + 0.3 * x[0]),
        lambda *x: 0.5 * x[0] * _pos(x[-1] + 0.2 * x[0]),
    ),
    "wavy": (
        lambda *x: 1.3 * _pos(x[-1] + 0.15 * np.sin(3 * x[0])),
        lambda *x: 0.4 * np.cos(2 * x[0]) * _pos(x[-1] + 0.15 * np.sin(3 * x[0])),
    ),
    "lobes": (
        lambda *x: _pos(x[-1]) * (1.0 + 0.9 * np.cos(np.pi * x[0])),
        lambda *x: 0.3 * x[-1] * _pos(x[-1]),
    ),
    "corner": (
        lambda *x: 0.8 * (_pos(x[0] - 0.1) + _pos(x[-1] - 0.1)),
        lambda *x: 0.25 * (_pos(x[0] - 0.1) - _pos(x[-1] - 0.1)),
    ),
    "cap": (
        lambda *x: 2.0 * _pos(x[-1] - 0.45) + 0.6 * _pos(x[-1] - 0.05) ** 2,
        lambda *x: 0.2 * _pos(x[-1] - 0.45),
    ),
    "gap": (
        lambda *x: 0.5 * np.abs(x[-1]) * (1 + 0.2 * x[0]),
        lambda *x: 0.2 * x[0] * np.abs(x[-1]),
    ),
}


@dataclass(frozen=True, eq=False)
class CorpusEntry:
    name: str
    solution: FbSolution

    @property
    def phi(self) -> ScalarField:
        return self.solution.phi

    @property
    def grid(self):
        return self.phi.grid

    def anchor(self) -> tuple[int, ...]:
        """Free-boundary node closest to the origin (ties broken in row-major order)."""
        nodes = mask_from_state(self.phi).boundary_nodes
        r = np.linalg.norm((nodes - self.grid.center) * self.grid.h, axis=1)
        return tuple(int(i) for i in nodes[int(np.argmin(r))])

    def first_component(self) -> ScalarField:
        return self.solution.U.components[0]


def generate(name: str, dim: int, n: int, Lambda: float = 1.0) -> CorpusEntry:
    try:
        fns = DESIGNS[name]
    except KeyError:
        raise ValueError(f"unknown corpus design {name!r}; choose from {sorted(DESIGNS)}") from None
    g = build_grid(dim, n)
    sol = minimize(FbProblem(Lambda, boundary_vector(g, fns)))
    return CorpusEntry(name, sol)


@lru_cache(maxsize=None)
def cached(name: str, dim: int, n: int, Lambda: float = 1.0) -> CorpusEntry:
    """Per-process cache; minimizers are deterministic so sharing is safe."""
    return generate(name, dim, n, Lambda)


def corpus(dim: int = 2, n: int = 129, names=None) -> list[CorpusEntry]:
    return [cached(nm, dim, n) for nm in (names or sorted(DESIGNS))]
