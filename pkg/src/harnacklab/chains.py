"""Constructive Harnack chains on a state function.

A chain step from ``x`` goes to the best node on the discrete sphere of
radius ``dist(x)`` around ``x``; the sphere touches the complement, and the
state function must grow by a factor ``1 + sigma_min`` along the step.
Iterating the step climbs from near the boundary into ``{phi > delta}``.
Away from the boundary, connectivity of superlevel sets is checked by
breadth-first search with component labelling as the cross-check.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ChainError
from .grid import ScalarField, ball_nodes, distance_transform, mask_from_state

SIGMA_MIN = 0.05
# relative tolerance used when several annulus nodes attain the maximum
_TIE = 1e-12


def _node(x) -> tuple[int, ...]:
    return tuple(int(i) for i in x)


def annulus_nodes(grid, x0, r: float) -> np.ndarray:
    """(K, d) nodes y with | |y - x0| - r | <= h/2, row-major order."""
    x0 = np.asarray(x0)
    h = grid.h
    span = int(math.ceil(r / h + 1))
    lo = np.maximum(x0 - span, 0)
    hi = np.minimum(x0 + span + 1, grid.n)
    sub = np.meshgrid(*[np.arange(lo[k], hi[k]) for k in range(grid.dim)], indexing="ij")
    offs = np.stack([(s - x0[k]) * h for k, s in enumerate(sub)])
    rad = np.sqrt(np.sum(offs**2, axis=0))
    sel = np.abs(rad - r) <= 0.5 * h * (1 + 1e-9)
    return np.stack([s[sel] for s in sub], axis=1)


def annulus_argmax(phi: ScalarField, x0, r: float):
    """Best annulus node: max phi, then smallest radial deviation, then row-major order."""
    g = phi.grid
    nodes = annulus_nodes(g, x0, r)
    vals = phi.values[tuple(nodes.T)]
    top = vals >= vals.max() * (1 - _TIE)
    dev = np.abs(np.linalg.norm((nodes - np.asarray(x0)) * g.h, axis=1) - r)
    cand = np.flatnonzero(top)
    best = cand[np.argmin(dev[cand])]  # argmin keeps the first, i.e. row-major, on ties
    return _node(nodes[best]), float(vals[best])


def _check_step_pre(phi: ScalarField, dist: ScalarField, x0):
    g = phi.grid
    if phi[x0] <= 0:
        raise ChainError(f"start node {x0} is not inside the domain")
    r = float(dist[x0])
    if r < 2 * g.h * (1 - 1e-9):
        raise ChainError(f"distance {r:.4g} to the complement is below 2h (under-resolved)")
    if 3 * r >= 1 - float(np.linalg.norm(g.point(x0))):
        raise ChainError(f"node {x0} is too far out: 3 dist >= 1 - |x0|")
    return r


def improving_step(phi: ScalarField, dist: ScalarField, x0, sigma_min: float = SIGMA_MIN):
    """Node y0 on the sphere of radius dist(x0) with phi(y0) >= (1 + sigma_min) phi(x0).

    Raises ChainError carrying the achieved ratio when the best node falls short.
    """
    x0 = _node(x0)
    r = _check_step_pre(phi, dist, x0)
    y0, val = annulus_argmax(phi, x0, r)
    ratio = val / float(phi[x0])
    if ratio < 1 + sigma_min:
        raise ChainError(f"improvement ratio {ratio:.4f} below {1 + sigma_min:.4f}", ratio=ratio)
    return y0


def step_ratio(phi: ScalarField, x0, y0) -> float:
    return float(phi[_node(y0)]) / float(phi[_node(x0)])


def max_steps(start_level: float, target: float, sigma_min: float) -> int:
    """ceil(log(target / start) / log(1 + sigma_min)), at least 0."""
    if start_level > target:
        return 0
    return max(0, math.ceil(math.log(target / start_level) / math.log1p(sigma_min) - 1e-12))


@dataclass(frozen=True)
class HarnackChain:
    points: tuple
    radii: tuple
    levels: tuple
    sigma_min: float
    target: float
    H_cfg: float = 4.0
    h: float = 0.0
    sigma_achieved: float = field(init=False)
    H_bound: float = field(init=False)
    terminal_level: float = field(init=False)

    def __post_init__(self):
        pts = tuple(_node(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        N = self.N
        if len(self.levels) != N + 1 or len(self.radii) != N + 1:
            raise ChainError("chain arrays have inconsistent lengths")
        ratios = [self.levels[k + 1] / self.levels[k] for k in range(N)]
        for k in range(N):
            step = math.dist(pts[k], pts[k + 1]) * self.h
            if abs(step - self.radii[k]) > self.h * (1 + 1e-9):
                raise ChainError(f"step {k} has length {step:.4g}, expected {self.radii[k]:.4g}")
            if ratios[k] < 1 + self.sigma_min - 1e-12:
                raise ChainError(f"step {k} improves by {ratios[k]:.4f} only", ratio=ratios[k])
        if N > max_steps(self.levels[0], self.target, self.sigma_min):
            raise ChainError(f"chain uses {N} steps, more than the bound")
        object.__setattr__(self, "sigma_achieved", min(ratios) - 1 if ratios else float("nan"))
        object.__setattr__(self, "H_bound", self.H_cfg**N)
        object.__setattr__(self, "terminal_level", self.levels[-1])

    @property
    def N(self) -> int:
        return len(self.points) - 1

    @property
    def travel(self) -> float:
        return float(sum(self.radii[:-1]))

    def to_dict(self) -> dict:
        sig = self.sigma_achieved
        return {
            "points": [list(p) for p in self.points],
            "radii": list(self.radii),
            "sigma_achieved": None if math.isnan(sig) else sig,
            "H_bound": self.H_bound,
            "terminal_level": self.terminal_level,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def escape_chain(
    phi: ScalarField,
    dist: ScalarField,
    x0,
    delta: float,
    sigma_min: float = SIGMA_MIN,
    H_cfg: float = 4.0,
) -> HarnackChain:
    """Iterate improving_step from x0 until phi exceeds delta."""
    x0 = _node(x0)
    start = float(phi[x0])
    if not start > delta / 2:
        raise ChainError(f"phi(x0) = {start:.4g} must exceed delta/2 = {delta / 2:.4g}")
    points, radii, levels = [x0], [float(dist[x0])], [start]
    bound = max_steps(start, delta, sigma_min)
    while levels[-1] <= delta:
        if len(points) > bound:
            raise ChainError(f"no escape within {bound} steps")
        y = improving_step(phi, dist, points[-1], sigma_min)
        points.append(y)
        radii.append(float(dist[y]))
        levels.append(float(phi[y]))
    return HarnackChain(tuple(points), tuple(radii), tuple(levels), sigma_min, delta, H_cfg, phi.grid.h)


@dataclass(frozen=True)
class TransferCheck:
    per_step: float
    end_to_end: float
    H_cfg: float
    N: int

    @property
    def passed(self) -> bool:
        return self.per_step <= self.H_cfg and self.end_to_end <= self.H_cfg ** max(self.N, 0) * (1 + 1e-12)


def chain_transfer_bound(chain: HarnackChain, w: ScalarField, H_cfg: float | None = None) -> TransferCheck:
    """Largest two-sided ratio of w between consecutive chain nodes, and end to end."""
    H = chain.H_cfg if H_cfg is None else H_cfg
    vals = np.array([float(w[p]) for p in chain.points])
    if np.any(vals <= 0):
        raise ChainError("w is not positive at every chain node")
    if chain.N == 0:
        return TransferCheck(1.0, 1.0, H, 0)
    q = vals[1:] / vals[:-1]
    per = float(np.max(np.maximum(q, 1 / q)))
    e2e = float(max(vals[0] / vals[-1], vals[-1] / vals[0]))
    return TransferCheck(per, e2e, H, chain.N)


def near_boundary_seeds(phi: ScalarField, dist: ScalarField, count: int, rng, lo=None, hi=None, delta=None):
    """Random admissible chain starts: 2h <= dist, 3 dist < 1 - |x|, |x| < 1/2.

    With ``delta`` the starts also satisfy delta/2 < phi <= delta; otherwise
    ``lo <= dist <= hi`` (defaults 2h and 0.1).
    """
    g = phi.grid
    d = dist.values
    ok = (phi.values > 0) & (d >= 2 * g.h * (1 - 1e-9)) & (3 * d < 1 - g.radius) & (g.radius < 0.5)
    if delta is not None:
        ok &= (phi.values > delta / 2) & (phi.values <= delta)
    else:
        ok &= (d >= (lo if lo is not None else 2 * g.h) * (1 - 1e-9)) & (d <= (hi if hi is not None else 0.1))
    cand = np.argwhere(ok)
    if len(cand) == 0:
        raise ChainError("no admissible seed nodes")
    pick = rng.choice(len(cand), size=min(count, len(cand)), replace=False)
    return [_node(cand[i]) for i in np.sort(pick)]


def per_step_ratios(chain: HarnackChain, w: ScalarField) -> np.ndarray:
    vals = np.array([float(w[p]) for p in chain.points])
    q = vals[1:] / vals[:-1]
    return np.maximum(q, 1 / q)


def calibrate_harnack(phi: ScalarField, fields, seeds, delta: float, sigma_min: float = SIGMA_MIN, safety: float = 2.0):
    """Per-step Harnack constant: ``safety`` times the largest observed step ratio."""
    dist = distance_transform(mask_from_state(phi))
    worst = 1.0
    for x0 in seeds:
        chain = escape_chain(phi, dist, x0, delta, sigma_min)
        for w in fields:
            r = per_step_ratios(chain, w)
            if r.size:
                worst = max(worst, float(r.max()))
    return safety * worst


@dataclass(frozen=True)
class NotConnected:
    label1: int
    label2: int


def superlevel_set(phi: ScalarField, level: float, R: float) -> np.ndarray:
    """Nodes of the open ball B_R with phi > level."""
    g = phi.grid
    inside = np.zeros(g.shape, dtype=bool)
    inside[ball_nodes(g, np.zeros(g.dim), R)] = True
    return inside & (phi.values > level)


def connect_away(phi: ScalarField, x1, x2, delta: float, R: float, tau: float = 0.25):
    """Shortest face-adjacency path from x1 to x2 inside B_R ∩ {phi > delta R / 2}.

    Returns the node list, or NotConnected with the component labels of the
    two endpoints.
    """
    g = phi.grid
    x1, x2 = _node(x1), _node(x2)
    for x in (x1, x2):
        if np.linalg.norm(g.point(x)) >= tau * R or phi[x] <= delta * R:
            raise ChainError(f"node {x} is not in B_(tau R) ∩ {{phi > delta R}}")
    allowed = superlevel_set(phi, delta * R / 2, R)
    prev = {x1: None}
    queue = deque([x1])
    while queue:
        x = queue.popleft()
        if x == x2:
            path = []
            while x is not None:
                path.append(x)
                x = prev[x]
            return path[::-1]
        for axis in range(g.dim):
            for step in (-1, 1):
                y = list(x)
                y[axis] += step
                y = tuple(y)
                if 0 <= y[axis] < g.n and y not in prev and allowed[y]:
                    prev[y] = x
                    queue.append(y)
    labels, _ = ndimage.label(allowed)
    return NotConnected(int(labels[x1]), int(labels[x2]))


def admissible_points(phi: ScalarField, delta: float, R: float, tau: float, count: int, rng):
    g = phi.grid
    ok = np.zeros(g.shape, dtype=bool)
    ok[ball_nodes(g, np.zeros(g.dim), tau * R)] = True
    ok &= phi.values > delta * R
    cand = np.argwhere(ok)
    if len(cand) == 0:
        return []
    pick = rng.choice(len(cand), size=min(count, len(cand)), replace=False)
    return [_node(cand[i]) for i in np.sort(pick)]


def tau_scan(phi: ScalarField, delta: float, R: float, taus, count: int = 10, seed: int = 0):
    """Largest tau in ``taus`` for which all pairs of sampled admissible points connect.

    Returns None when no tau works or no admissible points exist.
    """
    best = None
    for tau in sorted(taus):
        pts = admissible_points(phi, delta, R, tau, count, np.random.default_rng(seed))
        if len(pts) < 2:
            continue
        ok = all(
            not isinstance(connect_away(phi, pts[i], pts[j], delta, R, tau), NotConnected)
            for i in range(len(pts))
            for j in range(i + 1, len(pts))
        )
        if ok:
            best = tau
    return best
