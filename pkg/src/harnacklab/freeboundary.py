"""One-phase and vectorial free-boundary minimizers on the grid.

Discrete functional (with ``Lambda = 1`` for the vectorial functional)::

    F(U) = sum over grid edges touching B_1 of |U(x) - U(y)|^2 h^(d-2)
           + Lambda h^d #{x in B_1 : |U(x)| > 0}

Values at nodes with |x| >= 1 are prescribed data. For a given support the
energy is minimized by the componentwise discrete harmonic extension, so the
minimizer alternates harmonic solves with support updates, accepting an
update only when the discrete energy drops.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FreeBoundaryError
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    build_grid,
    interpolate,
    make_mask,
    save_field,
    load_field,
    shift,
    state_field,
)
from .harmonic import DirichletProblem, solve, solve_many

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FbProblem:
    Lambda: float
    boundary_data: VectorField
    max_iter: int = 200
    tol: float = 1e-6
    multilevel: bool = True

    def __post_init__(self):
        if not self.Lambda > 0:
            raise FreeBoundaryError(f"Lambda must be positive, got {self.Lambda}")
        outside = ~self.grid.in_ball
        if not any(np.any(c.values[outside] != 0) for c in self.boundary_data.components):
            raise FreeBoundaryError("boundary data vanish identically")

    @property
    def grid(self) -> Grid:
        return self.boundary_data.grid

    @property
    def k(self) -> int:
        return self.boundary_data.k


@dataclass(frozen=True, eq=False)
class FbSolution:
    U: VectorField
    energy_history: list[float]
    converged: bool
    Lambda: float
    iterations: int = 0
    phi: ScalarField = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "phi", state_field(self.U.grid, self.U.norm()))

    @property
    def support(self) -> np.ndarray:
        return self.phi.values > 0

    @property
    def energy(self) -> float:
        return self.energy_history[-1]


def data_field(grid: Grid, fn) -> ScalarField:
    """Evaluate ``fn(*coords)`` and keep it only at nodes with |x| >= 1."""
    vals = np.broadcast_to(np.asarray(fn(*grid.coords), dtype=float), grid.shape)
    return ScalarField(grid, np.where(grid.in_ball, 0.0, vals))


def boundary_vector(grid: Grid, fns) -> VectorField:
    return VectorField(grid, tuple(data_field(grid, f) for f in fns))


def _stack(U) -> np.ndarray:
    if isinstance(U, VectorField):
        return U.stack()
    if isinstance(U, ScalarField):
        return U.values[None]
    arr = np.asarray(U, dtype=float)
    return arr if arr.ndim == 0 else arr


def energy(U, Lambda: float, grid: Grid | None = None) -> float:
    """Discrete F_Lambda of a scalar or vector field (arrays need ``grid``)."""
    if grid is None:
        grid = U.grid
    arr = _stack(U)
    if arr.ndim == grid.dim:
        arr = arr[None]
    ball = grid.in_ball
    total = 0.0
    for axis in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        touch = ball[lo] | ball[hi]
        diff2 = np.zeros(touch.shape)
        for comp in arr:
            diff2 += (comp[hi] - comp[lo]) ** 2
        total += float(np.sum(diff2[touch]))
    grad = total * grid.h ** (grid.dim - 2)
    norm2 = np.sum(arr**2, axis=0)
    volume = int(np.count_nonzero((norm2 > 0) & ball))
    return grad + Lambda * grid.h**grid.dim * volume


class _Extender:
    """Componentwise harmonic extension of fixed data into a support set."""

    def __init__(self, data: np.ndarray, grid: Grid, tol: float):
        self.data = data
        self.grid = grid
        self.tol = tol
        self.fields = [ScalarField(grid, d) for d in data]

    def __call__(self, support: np.ndarray, initial: np.ndarray | None = None) -> np.ndarray:
        support = support & self.grid.in_ball
        U = np.where(self.grid.in_ball, 0.0, self.data)
        if not support.any():
            return U
        mask = make_mask(self.grid, support)
        sols = solve_many(mask, self.fields, tol=self.tol, initials=initial)
        return np.stack([s.values for s in sols])


def _nbr_max(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    for axis in range(a.ndim):
        for step in (-1, 1):
            out = np.maximum(out, shift(a, axis, step))
    return out


def _frozen_flips(U: np.ndarray, support: np.ndarray, grid: Grid, Lambda: float, parity: int):
    """Single-node flips of one checkerboard colour with negative frozen energy change.

    Nodes of one colour share no edge, so their frozen changes add up exactly
    and the re-solved energy can only be lower still.
    """
    d = grid.dim
    h = grid.h
    colour = (sum(np.indices(grid.shape)) % 2) == parity
    nb = [shift(U, ax + 1, st) for ax in range(d) for st in (-1, 1)]
    norm = np.sqrt(np.sum(U**2, axis=0))
    nbmax = _nbr_max(norm)
    w = h ** (d - 2)
    cell = Lambda * h**d
    # removal: U(x) -> 0
    before = sum(np.sum((U - v) ** 2, axis=0) for v in nb)
    after_rm = sum(np.sum(v**2, axis=0) for v in nb)
    d_rm = w * (after_rm - before) - cell
    # addition: U(x) -> neighbour mean (the frozen optimum)
    mean = sum(nb) / (2 * d)
    after_add = sum(np.sum((mean - v) ** 2, axis=0) for v in nb)
    d_add = w * (after_add - after_rm) + cell
    rm = support & colour & (d_rm < -1e-15 * cell)
    add = (~support) & grid.in_ball & colour & (nbmax > 0) & (d_add < -1e-15 * cell)
    return rm, add


def _descend(ext: _Extender, support: np.ndarray, Lambda: float, max_iter: int):
    grid = ext.grid
    h = grid.h
    thr = h * math.sqrt(Lambda)
    U = ext(support)
    support = (np.sum(U**2, axis=0) > 0) & grid.in_ball
    E = energy(U, Lambda, grid)
    history = [E]
    seen = deque(maxlen=10)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        key = hashlib.sha1(np.packbits(support).tobytes()).hexdigest()
        if key in seen:
            log.warning("support cycle detected after %d iterations", it)
            break
        seen.append(key)
        accepted = False
        # exact descent first: one checkerboard colour of single-node flips
        for parity in (it % 2, 1 - it % 2):
            rm, add = _frozen_flips(U, support, grid, Lambda, parity)
            if rm.any() or add.any():
                Uc = ext((support & ~rm) | add, U)
                Ec = energy(Uc, Lambda, grid)
                if Ec < E:
                    U, E = Uc, Ec
                    accepted = True
                    break
        if not accepted:
            # continuum free-boundary condition |grad U| = sqrt(Lambda), read off one cell;
            # moves whole stretches of front that single flips leave pinned
            norm = np.sqrt(np.sum(U**2, axis=0))
            nbmax = _nbr_max(norm)
            rm_score = np.where(support & (norm < thr), thr - norm, 0.0)
            add_score = np.where(~support & grid.in_ball & (nbmax > thr), nbmax - thr, 0.0)
            trials = []
            if rm_score.any() or add_score.any():
                rm_all, add_all = rm_score > 0, add_score > 0
                trials = [(support & ~rm_all) | add_all, support & ~rm_all, support | add_all]
                score = rm_score + add_score
                vals = np.sort(score[score > 0])[::-1]
                pick = score >= vals[max(1, len(vals) // 2) - 1]
                trials.append((support & ~(pick & rm_all)) | (pick & add_all))
            for cand in trials:
                if np.array_equal(cand, support):
                    continue
                Uc = ext(cand, U)
                Ec = energy(Uc, Lambda, grid)
                if Ec < E - 1e-14 * max(1.0, abs(E)):
                    U, E = Uc, Ec
                    accepted = True
                    break
        if accepted:
            support = (np.sum(U**2, axis=0) > 0) & grid.in_ball
        if not accepted:
            converged = True
            break
        history.append(E)
    return U, history, converged, it


def _coarsen(n: int) -> int:
    return (n - 1) // 2 + 1


def _best_start(ext: _Extender, Lambda: float, max_iter: int):
    """Descend from the full ball and from the empty support; keep the lower energy."""
    runs = [_descend(ext, start, Lambda, max_iter) for start in (ext.grid.in_ball.copy(), np.zeros(ext.grid.shape, bool))]
    return min(runs, key=lambda run: run[1][-1])


def minimize(problem: FbProblem, initial_support: np.ndarray | None = None) -> FbSolution:
    """Alternating minimization: harmonic solves on the support, accepted support updates.

    Without an initial support, the coarsest level (about 65 nodes per axis
    with ``multilevel``) is descended from both the full ball and the empty
    set, and the lower-energy result is prolongated level by level through
    its multilinear interpolant.
    """
    grid = problem.grid
    full = np.stack([c.values for c in problem.boundary_data.components])
    ext = _Extender(full, grid, problem.tol)
    if initial_support is not None:
        run = _descend(ext, np.asarray(initial_support, dtype=bool), problem.Lambda, problem.max_iter)
    else:
        levels = [grid.n]
        if problem.multilevel:
            while (levels[-1] - 1) % 2 == 0 and _coarsen(levels[-1]) >= 65:
                levels.append(_coarsen(levels[-1]))
        levels = levels[::-1]
        U = coarse_grid = None
        for n in levels:
            g = build_grid(grid.dim, n)
            step = (grid.n - 1) // (n - 1)
            sl = (slice(None),) + tuple(slice(None, None, step) for _ in range(grid.dim))
            level_ext = ext if n == grid.n else _Extender(full[sl], g, problem.tol)
            if U is None:
                run = _best_start(level_ext, problem.Lambda, problem.max_iter)
            else:
                pts = np.stack(g.coords)
                interp = [interpolate(ScalarField(coarse_grid, c), pts) for c in U]
                start = (np.sum(np.square(interp), axis=0) > 0) & g.in_ball
                run = _descend(level_ext, start, problem.Lambda, problem.max_iter)
            U, coarse_grid = run[0], g
    U, history, converged, it = run
    comps = tuple(ScalarField(grid, c) for c in U)
    return FbSolution(VectorField(grid, comps), history, converged, problem.Lambda, it)


@dataclass(frozen=True, eq=False)
class Violation:
    family: str
    direction: str
    energy_gap: float
    competitor: ScalarField


@dataclass(frozen=True, eq=False)
class SubSuperReport:
    passed: bool
    seed: int
    trials: int
    tol_E: float
    lam: float
    Lambda: float
    families: dict
    violations: tuple

    @property
    def certificate(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "trials": self.trials,
            "tol_E": self.tol_E,
            "lambda": self.lam,
            "Lambda": self.Lambda,
            "families": dict(sorted(self.families.items())),
            "violations": [
                {"family": v.family, "direction": v.direction, "energy_gap": v.energy_gap} for v in self.violations
            ],
        }


def _cutoff(grid: Grid) -> np.ndarray:
    """Smooth-ish radial cutoff: 1 on B_0.8, 0 outside B_0.9."""
    return np.clip((0.9 - grid.radius) / 0.1, 0.0, 1.0)


def _bump(grid: Grid, p, rho: float) -> np.ndarray:
    return np.maximum(1.0 - grid.distances_from(p) ** 2 / rho**2, 0.0)


def _reharmonize(u: np.ndarray, support: np.ndarray, grid: Grid, region: np.ndarray) -> np.ndarray:
    """Harmonic in support ∩ region, equal to u elsewhere and zero on region minus support."""
    fixed = np.where(region & ~support, 0.0, u)
    inside = support & region
    if not inside.any():
        return fixed
    sol = solve(DirichletProblem(make_mask(grid, inside), ScalarField(grid, fixed), tol=1e-9))
    return sol.values


def _layer(support: np.ndarray, outer: bool) -> np.ndarray:
    grown = ndimage.binary_dilation(support) if outer else support
    if outer:
        return grown & ~support
    return support & ~ndimage.binary_erosion(support, border_value=1)


def sub_super_check(
    u: ScalarField,
    lam: float,
    Lambda: float,
    trials: int = 100,
    seed: int = 0,
    tol_E: float | None = None,
) -> SubSuperReport:
    """Randomized ordered-competitor test of the sub/supersolution properties.

    Upward competitors v >= u must not beat u for F_Lambda; downward
    competitors v <= u must not beat u for F_lam. Every competitor agrees
    with u outside B_0.9, so data near the unit sphere are untouched.
    Families: truncation (u - s chi)^+, multiplicative cut (1 - t chi) u,
    one-cell erosion and dilation of the support (re-harmonized and clipped
    to stay ordered), local cuts (u - s b)^+ and local bumps u + s b centred
    at random free-boundary nodes.
    """
    if u.role != "state":
        raise FreeBoundaryError(f"expected a state field, got role {u.role!r}")
    if lam > Lambda:
        raise FreeBoundaryError(f"need lambda <= Lambda, got {lam} > {Lambda}")
    if not lam > 0:
        raise FreeBoundaryError("lambda must be positive")
    g = u.grid
    rng = np.random.default_rng(seed)
    if tol_E is None:
        tol_E = Lambda * g.h**g.dim
    uv = u.values
    top = float(np.max(uv))
    region = g.radius < 0.9
    chi = _cutoff(g)
    support = uv > 0
    fb_nodes = np.argwhere(_layer(support, outer=False) & (g.radius < 0.8))
    E_up = energy(uv, Lambda, g)
    E_down = energy(uv, lam, g)
    families: dict[str, int] = {}
    violations = []

    def test(v, family, direction):
        families[family] = families.get(family, 0) + 1
        if direction == "up":
            gap = E_up - energy(v, Lambda, g)
        else:
            gap = E_down - energy(v, lam, g)
        if gap > tol_E:
            violations.append(Violation(family, direction, gap, ScalarField(g, v, "state")))

    test(np.minimum(_reharmonize(uv, support & ~(_layer(support, False) & region), g, region), uv), "erosion", "down")
    test(np.maximum(_reharmonize(uv, support | (_layer(support, True) & region & g.in_ball), g, region), uv), "dilation", "up")
    kinds = ("truncation", "cut", "local-cut", "local-bump")
    for i in range(max(0, trials - 2)):
        kind = kinds[i % len(kinds)]
        if kind == "truncation":
            s = top * 10 ** rng.uniform(-3, -1)
            test(np.maximum(uv - s * chi, 0.0), kind, "down")
        elif kind == "cut":
            t = 10 ** rng.uniform(-3, -0.5)
            test((1 - t * chi) * uv, kind, "down")
        elif len(fb_nodes):
            p = g.point(fb_nodes[rng.integers(len(fb_nodes))])
            rho = rng.uniform(2, 10) * g.h
            b = _bump(g, p, rho) * region
            if kind == "local-cut":
                s = rng.uniform(0.1, 1.0) * float(np.max(uv[b > 0]))
                test(np.maximum(uv - s * b, 0.0), kind, "down")
            else:
                s = rng.uniform(0.1, 2.0) * rho * math.sqrt(Lambda)
                test(uv + s * b, kind, "up")
    return SubSuperReport(
        not violations, seed, sum(families.values()), tol_E, lam, Lambda, families, tuple(violations)
    )


def save_solution(directory, sol: FbSolution, settings: dict | None = None) -> Path:
    """One FLD1 file per component plus ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for j, comp in enumerate(sol.U.components):
        name = f"component_{j}.fld"
        save_field(out / name, comp)
        files.append(name)
    manifest = {
        "components": files,
        "Lambda": sol.Lambda,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "energy_history": sol.energy_history,
        "settings": settings or {},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_solution(directory) -> FbSolution:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    comps = tuple(load_field(d / name) for name in manifest["components"])
    grid = comps[0].grid
    return FbSolution(
        VectorField(grid, comps),
        list(manifest["energy_history"]),
        bool(manifest["converged"]),
        float(manifest["Lambda"]),
        int(manifest.get("iterations", 0)),
    )
