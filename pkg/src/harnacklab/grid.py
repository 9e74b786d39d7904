"""Uniform Cartesian grids over [-1, 1]^d, masked fields and geometric queries.

Arrays are indexed ``values[i_1, ..., i_d]`` with node coordinates
``x_k = (i_k - c) * h``, ``c = (n - 1) / 2``, so the origin is the node
``(c, ..., c)``. Ball membership is strict (``|x| < 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyDomainError, FieldFormatError, GridError

ROLES = ("state", "harmonic", "auxiliary")
MAGIC = b"FLD1"

# relative slack used when comparing squared distances against r**2
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 9 or self.n % 2 == 0:
            raise GridError(f"n must be odd and >= 9 (under-resolved domain), got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 / (self.n - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def center(self) -> int:
        return (self.n - 1) // 2

    @property
    def origin(self) -> tuple[int, ...]:
        return (self.center,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.center) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        out = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        for a in out:
            a.setflags(write=False)
        return tuple(out)

    @cached_property
    def radius(self) -> np.ndarray:
        r = np.sqrt(sum(c * c for c in self.coords))
        r.setflags(write=False)
        return r

    @cached_property
    def in_ball(self) -> np.ndarray:
        """Nodes with |x| < 1."""
        b = self.radius < 1.0
        b.setflags(write=False)
        return b

    @cached_property
    def interior(self) -> np.ndarray:
        """Nodes of B_1 whose whole (2d+1)-point stencil lies in B_1."""
        b = self.in_ball.copy()
        for axis in range(self.dim):
            for step in (-1, 1):
                b &= shift(self.in_ball, axis, step, fill=False)
        b.setflags(write=False)
        return b

    def point(self, node) -> np.ndarray:
        return (np.asarray(node, dtype=float) - self.center) * self.h

    def node(self, point) -> tuple[int, ...]:
        """Nearest node to a point (rounded index)."""
        idx = np.rint(np.asarray(point, dtype=float) / self.h + self.center).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n):
            raise GridError(f"point {point} lies outside the grid")
        return tuple(int(i) for i in idx)

    def distances_from(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return np.sqrt(sum((c - p[k]) ** 2 for k, c in enumerate(self.coords)))


def build_grid(dim: int, n: int) -> Grid:
    return Grid(dim, n)


def shift(a: np.ndarray, axis: int, step: int, fill=0.0) -> np.ndarray:
    """``out[i] = a[i + step]`` along ``axis``; out-of-range entries get ``fill``."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def neighbor_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the 2d face neighbours, zero outside the array."""
    total = np.zeros_like(a, dtype=float)
    for axis in range(a.ndim):
        total += shift(a, axis, 1)
        total += shift(a, axis, -1)
    return total


def discrete_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """(sum of face neighbours - 2d * centre) / h^2; meaningful away from the array edge."""
    return (neighbor_sum(values) - 2 * values.ndim * values) / (h * h)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    role: str = "auxiliary"

    def __post_init__(self):
        if self.role not in ROLES:
            raise GridError(f"unknown role {self.role!r}")
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise GridError(f"values have shape {vals.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field has non-finite values")
        if self.role == "state":
            if np.any(vals < 0):
                raise GridError("state field must be nonnegative")
            if np.any(vals[~self.grid.in_ball] != 0):
                raise GridError("state field must vanish at every node with |x| >= 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, node):
        return self.values[tuple(node)]

    def with_values(self, values, role=None) -> "ScalarField":
        return ScalarField(self.grid, values, role or self.role)

    def scaled(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, c * self.values, self.role)


def state_field(grid: Grid, values) -> ScalarField:
    """Build a state field, zeroing every node with |x| >= 1."""
    vals = np.where(grid.in_ball, np.asarray(values, dtype=float), 0.0)
    return ScalarField(grid, vals, "state")


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    components: tuple[ScalarField, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise GridError("vector field needs at least one component")
        if any(c.grid != self.grid for c in comps):
            raise GridError("all components must share the same grid")
        object.__setattr__(self, "components", comps)

    @property
    def k(self) -> int:
        return len(self.components)

    def stack(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.stack() ** 2, axis=0))


@dataclass(frozen=True, eq=False)
class DomainMask:
    grid: Grid
    inside: np.ndarray
    boundary: np.ndarray = field(repr=False)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """(K, d) integer array of boundary node indices, row-major order."""
        return np.argwhere(self.boundary)

    @property
    def count(self) -> int:
        return int(self.inside.sum())


def _boundary_of(grid: Grid, inside: np.ndarray) -> np.ndarray:
    touching = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        for step in (-1, 1):
            touching |= shift(inside, axis, step, fill=False)
    return touching & ~inside & grid.in_ball


def make_mask(grid: Grid, inside) -> DomainMask:
    inside = np.asarray(inside, dtype=bool) & grid.in_ball
    if not inside.any():
        raise EmptyDomainError("empty domain")
    inside = inside.copy()
    inside.setflags(write=False)
    boundary = _boundary_of(grid, inside)
    boundary.setflags(write=False)
    return DomainMask(grid, inside, boundary)


def mask_from_state(phi: ScalarField) -> DomainMask:
    if phi.role != "state":
        raise GridError(f"mask_from_state needs a state field, got role {phi.role!r}")
    return make_mask(phi.grid, phi.values > 0)


def distance_transform(mask: DomainMask) -> ScalarField:
    """Exact Euclidean distance from each inside node to the nearest node of B_1 minus Omega.

    Every node outside the mask (including all nodes with |x| >= 1) counts as
    complement; the result is 0 there.
    """
    g = mask.grid
    d = ndimage.distance_transform_edt(mask.inside, sampling=g.h)
    return ScalarField(g, np.where(mask.inside, d, 0.0), "auxiliary")


def _snap(idx: np.ndarray) -> np.ndarray:
    near = np.rint(idx)
    return np.where(np.abs(idx - near) < 1e-9, near, idx)


def interpolate(phi: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at physical points of shape (d, ...)."""
    g = phi.grid
    idx = _snap(np.asarray(points, dtype=float) / g.h + g.center)
    return ndimage.map_coordinates(phi.values, idx, order=1, mode="nearest")


def rescale_field(phi: ScalarField, x0, r: float, n_out: int) -> ScalarField:
    """Sample x -> phi(x0 + r x) / r on a fresh grid with n_out nodes per axis."""
    g = phi.grid
    x0 = tuple(int(i) for i in x0)
    p0 = g.point(x0)
    if phi[x0] != 0:
        raise GridError("rescaling centre must be a zero of phi")
    if phi.role == "state" and not mask_from_state(phi).boundary[x0]:
        raise GridError("rescaling centre must be a boundary node")
    if not 0 < r < 1 - np.linalg.norm(p0):
        raise GridError(f"r={r} outside (0, 1 - |x0|) = (0, {1 - np.linalg.norm(p0):.6g})")
    out = Grid(g.dim, n_out)
    pts = np.stack([p0[k] + r * c for k, c in enumerate(out.coords)])
    vals = interpolate(phi, pts) / r
    if phi.role == "state":
        vals = np.maximum(vals, 0.0)
        return state_field(out, vals)
    return ScalarField(out, vals, phi.role)


def ball_nodes(grid: Grid, center, r: float, closed: bool = False) -> tuple[np.ndarray, ...]:
    """Index arrays of the nodes of B_r(center) (strict unless ``closed``)."""
    c = np.asarray(center)
    if np.issubdtype(c.dtype, np.integer):
        c = grid.point(c)
    span = int(math.ceil(r / grid.h)) + 1
    ci = np.rint(c / grid.h + grid.center).astype(int)
    lo = np.maximum(ci - span, 0)
    hi = np.minimum(ci + span + 1, grid.n)
    sub = np.meshgrid(*[np.arange(lo[k], hi[k]) for k in range(grid.dim)], indexing="ij")
    d2 = sum(((s - grid.center) * grid.h - c[k]) ** 2 for k, s in enumerate(sub))
    r2 = r * r
    sel = d2 <= r2 * (1 + _EDGE_EPS) if closed else d2 < r2 * (1 - _EDGE_EPS)
    return tuple(s[sel] for s in sub)


def save_field(path, phi: ScalarField) -> None:
    g = phi.grid
    header = f"FLD1 {g.dim} {g.n} {phi.role}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(phi.values, dtype="<f8").tobytes())


def load_field(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FieldFormatError("bad magic")
    end = raw.find(b"\n", 0, 128)
    if end < 0:
        raise FieldFormatError("malformed header")
    parts = raw[:end].decode("ascii", errors="replace").split()
    if len(parts) != 4:
        raise FieldFormatError("malformed header")
    try:
        dim, n = int(parts[1]), int(parts[2])
        grid = Grid(dim, n)
    except (ValueError, GridError) as exc:
        raise FieldFormatError(f"malformed header: {exc}") from exc
    role = parts[3]
    if role not in ROLES:
        raise FieldFormatError(f"malformed header: unknown role {role!r}")
    payload = raw[end + 1 :]
    if len(payload) != 8 * grid.size:
        raise FieldFormatError(f"size mismatch: expected {8 * grid.size} bytes, got {len(payload)}")
    vals = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(np.float64)
    if not np.all(np.isfinite(vals)):
        raise FieldFormatError("non-finite payload")
    try:
        return ScalarField(grid, vals, role)
    except GridError as exc:
        raise FieldFormatError(str(exc)) from exc
