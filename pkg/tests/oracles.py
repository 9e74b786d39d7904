"""Independent reference computations used as test oracles.

Nothing here calls into the implementation under test beyond grid
construction; every routine is a brute-force or dense re-derivation.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np


def node_points(grid, mask):
    idx = np.argwhere(mask)
    return idx, (idx - grid.center) * grid.h


def brute_distance(grid, inside):
    """All-pairs nearest complement node (complement includes every node off B_1)."""
    inner_idx, inner = node_points(grid, inside)
    _, outer = node_points(grid, ~inside)
    out = np.zeros(grid.shape)
    for (i, p) in zip(inner_idx, inner):
        out[tuple(i)] = np.sqrt(np.min(np.sum((outer - p) ** 2, axis=1)))
    return out


def brute_boundary(grid, inside):
    """Nodes of B_1 outside Omega with a face neighbour inside Omega, by explicit scan."""
    r = np.sqrt(sum(c * c for c in grid.coords))
    out = np.zeros(grid.shape, dtype=bool)
    for node in itertools.product(range(grid.n), repeat=grid.dim):
        if inside[node] or not r[node] < 1:
            continue
        for axis in range(grid.dim):
            for step in (-1, 1):
                nb = list(node)
                nb[axis] += step
                if 0 <= nb[axis] < grid.n and inside[tuple(nb)]:
                    out[node] = True
    return out


def dense_dirichlet(grid, inside, fixed):
    """Solve the (2d+1)-point Dirichlet problem by dense Gaussian elimination."""
    nodes = [tuple(x) for x in np.argwhere(inside)]
    index = {x: k for k, x in enumerate(nodes)}
    m = len(nodes)
    A = np.zeros((m, m))
    b = np.zeros(m)
    for k, x in enumerate(nodes):
        A[k, k] = 2 * grid.dim
        for axis in range(grid.dim):
            for step in (-1, 1):
                y = list(x)
                y[axis] += step
                y = tuple(y)
                if y in index:
                    A[k, index[y]] -= 1
                else:
                    b[k] += fixed[y]
    sol = np.linalg.solve(A, b)
    out = np.array(fixed, dtype=float)
    for k, x in enumerate(nodes):
        out[x] = sol[k]
    return out


def flood_labels(allowed):
    """Face-connected component labels by breadth-first flood fill."""
    labels = np.zeros(allowed.shape, dtype=int)
    current = 0
    dim = allowed.ndim
    for start in map(tuple, np.argwhere(allowed)):
        if labels[start]:
            continue
        current += 1
        labels[start] = current
        queue = deque([start])
        while queue:
            x = queue.popleft()
            for axis in range(dim):
                for step in (-1, 1):
                    y = list(x)
                    y[axis] += step
                    y = tuple(y)
                    if 0 <= y[axis] < allowed.shape[axis] and allowed[y] and not labels[y]:
                        labels[y] = current
                        queue.append(y)
    return labels


def exhaustive_annulus_max(phi_values, grid, x0, r):
    """Max of phi over nodes y with | |y - x0| - r | <= h/2, scanning every node of the grid."""
    p0 = (np.asarray(x0) - grid.center) * grid.h
    dist = np.sqrt(sum((c - p0[k]) ** 2 for k, c in enumerate(grid.coords)))
    ring = np.abs(dist - r) <= grid.h / 2 * (1 + 1e-9)
    return float(np.max(phi_values[ring]))


def all_pairs_lipschitz(grid, values):
    """max |f(x) - f(y)| / |x - y| over all node pairs of B_1."""
    r = np.sqrt(sum(c * c for c in grid.coords))
    sel = r < 1
    P = np.stack([c[sel] for c in grid.coords], axis=1)
    V = values[sel]
    best = 0.0
    for i in range(0, len(P), 400):
        d = np.linalg.norm(P[i : i + 400, None] - P[None], axis=2)
        q = np.abs(V[i : i + 400, None] - V[None])
        best = max(best, float(np.max(np.where(d > 0, q / np.where(d > 0, d, 1), 0))))
    return best


def lens_complement_fraction(center_ball, radius_ball, x0, r, samples, rng):
    """Monte-Carlo fraction of B_r(x0) lying outside B_radius_ball(center_ball)."""
    dim = len(x0)
    pts = rng.normal(size=(samples, dim))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= r * rng.random(samples)[:, None] ** (1 / dim)
    pts += np.asarray(x0)
    return float(np.mean(np.linalg.norm(pts - np.asarray(center_ball), axis=1) >= radius_ball))
