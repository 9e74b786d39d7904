"""Estimators for the seven structural conditions on a state function phi.

Every estimator works on node samples and scans boundary nodes x0 with the
dyadic radii ``r = 2**-j * (1 - |x0|)``. Exclusion floors (``dist >= 2h``,
``r >= 4h`` or ``8h``, ``r t >= 2 L h``) keep grid-scale artefacts out of the
constants; the floors actually used are copied into the report metadata.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyDomainError, EstimationError, GridError
from .grid import (
    DomainMask,
    Grid,
    ScalarField,
    discrete_laplacian,
    distance_transform,
    interpolate,
    mask_from_state,
    shift,
)

EPS = 1e-9
DEFAULT_C_TOL = 1e-3


def _require_state(phi: ScalarField):
    if phi.role != "state":
        raise GridError(f"expected a state field, got role {phi.role!r}")


def dyadic_radii(R: float, floor: float, j_max: int | None = None) -> list[float]:
    """``[R, R/2, R/4, ...]`` down to ``floor`` (inclusive, up to rounding)."""
    out = []
    j = 0
    while True:
        r = R * 2.0**-j
        if r < floor * (1 - EPS) or (j_max is not None and j > j_max):
            break
        out.append(r)
        j += 1
    return out


class _Window:
    """Cube of nodes around x0 large enough to hold B_R(x0), with integer squared offsets."""

    def __init__(self, grid: Grid, x0, R: float):
        span = int(math.ceil(R / grid.h)) + 1
        x0 = np.asarray(x0, dtype=int)
        lo = np.maximum(x0 - span, 0)
        hi = np.minimum(x0 + span + 1, grid.n)
        self.slices = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        axes = [np.arange(a, b) - c for a, b, c in zip(lo, hi, x0)]
        off = np.meshgrid(*axes, indexing="ij")
        self.d2 = sum(o * o for o in off)
        self.h = grid.h

    def take(self, arr):
        return arr[self.slices]

    def open_ball(self, r):
        return self.d2 < (r / self.h) ** 2 * (1 - EPS)

    def closed_ball(self, r):
        return self.d2 <= (r / self.h) ** 2 * (1 + EPS)


def _boundary_points(mask: DomainMask):
    g = mask.grid
    nodes = mask.boundary_nodes
    R = 1.0 - g.radius[tuple(nodes.T)]
    return nodes, R


def estimate_lipschitz(phi: ScalarField) -> float:
    """Max of |phi(x) - phi(y)| / h over face-neighbour pairs with both nodes in B_1."""
    _require_state(phi)
    g = phi.grid
    best = 0.0
    for axis in range(g.dim):
        nxt = shift(phi.values, axis, 1)
        both = g.in_ball & shift(g.in_ball, axis, 1, fill=False)
        if both.any():
            best = max(best, float(np.max(np.abs(nxt - phi.values)[both])))
    return best / g.h


def estimate_kappa(phi: ScalarField, dist: ScalarField | None = None) -> float:
    """min phi/dist over inside nodes with |x| < 1/2 and dist >= 2h."""
    _require_state(phi)
    g = phi.grid
    if dist is None:
        dist = distance_transform(mask_from_state(phi))
    d = dist.values
    ok = (phi.values > 0) & (g.radius < 0.5) & (d >= 2 * g.h * (1 - EPS))
    if not ok.any():
        raise EstimationError("domain too thin for kappa estimate")
    return float(np.min(phi.values[ok] / d[ok]))


def subharmonic_defect(phi: ScalarField) -> float:
    """Most negative discrete Laplacian over nodes whose stencil lies inside B_1."""
    g = phi.grid
    lap = discrete_laplacian(phi.values, g.h)
    return float(np.min(lap[g.interior]))


def subharmonic_tolerance(L_hat: float, h: float, c_tol: float = DEFAULT_C_TOL) -> float:
    return c_tol * L_hat / h


def estimate_density(mask: DomainMask, j_max: int | None = None) -> float:
    """min over boundary x0 and dyadic r >= 4h of the complement fraction of B_r(x0)."""
    g = mask.grid
    nodes, Rs = _boundary_points(mask)
    if len(nodes) == 0:
        raise EstimationError("resolution too coarse: no boundary nodes")
    outside = (~mask.inside).astype(float)
    best = math.inf
    for x0, R in zip(nodes, Rs):
        radii = dyadic_radii(R, 4 * g.h, j_max)
        if not radii:
            continue
        w = _Window(g, x0, radii[0])
        d2 = w.d2.ravel()
        tot = np.cumsum(np.bincount(d2))
        out = np.cumsum(np.bincount(d2, weights=w.take(outside).ravel()))
        for r in radii:
            k = int(math.ceil((r / g.h) ** 2 * (1 - EPS))) - 1
            k = min(k, len(tot) - 1)
            best = min(best, out[k] / tot[k])
    if best is math.inf:
        raise EstimationError("resolution too coarse: no admissible (x0, r) pair")
    return float(best)


def level_t_grid(r: float, L_hat: float, h: float, m_max: int = 30) -> np.ndarray:
    ts = [2.0**-m for m in range(m_max + 1) if r * 2.0**-m >= 2 * L_hat * h * (1 - EPS)]
    return np.array(ts)


def estimate_level_constant(
    phi: ScalarField, L_hat: float | None = None, j_max: int | None = None, m_max: int = 30
) -> float:
    """max over boundary x0, dyadic r >= 8h and t = 2^-m with r t >= 2 L h of
    #({0 < phi < r t} in B_r(x0)) / (t #B_r(x0))."""
    _require_state(phi)
    g = phi.grid
    if L_hat is None:
        L_hat = estimate_lipschitz(phi)
    mask = mask_from_state(phi)
    nodes, Rs = _boundary_points(mask)
    best = -math.inf
    for x0, R in zip(nodes, Rs):
        radii = dyadic_radii(R, 8 * g.h, j_max)
        if not radii:
            continue
        w = _Window(g, x0, radii[0])
        vals = w.take(phi.values)
        for r in radii:
            ts = level_t_grid(r, L_hat, g.h, m_max)
            if len(ts) == 0:
                continue
            ball = vals[w.open_ball(r)]
            pos = np.sort(ball[ball > 0])
            counts = np.searchsorted(pos, r * ts, side="left")
            best = max(best, float(np.max(counts / (ts * ball.size))))
    if best == -math.inf:
        raise EstimationError("no admissible (x0, r, t) triple for the level constant")
    return best


def _sphere_directions(dim: int, r: float, h: float) -> np.ndarray:
    if dim == 2:
        K = 4 * max(4, int(math.ceil(math.pi * r / (2 * h))))
        th = 2 * np.pi * np.arange(K) / K
        return np.stack([np.cos(th), np.sin(th)])
    K = min(4000, max(64, int(math.ceil(4 * math.pi * (2 * r / h) ** 2))))
    i = np.arange(K) + 0.5
    z = 1 - 2 * i / K
    rho = np.sqrt(1 - z * z)
    az = np.pi * (1 + 5**0.5) * i
    fib = np.stack([rho * np.cos(az), rho * np.sin(az), z])
    axes = np.concatenate([np.eye(3), -np.eye(3)], axis=1)
    return np.concatenate([axes, fib], axis=1)


def ball_sup(phi: ScalarField, x0, r: float) -> float:
    """Sup of the multilinear interpolant of phi over the closed ball B_r(x0).

    Uses the nodes of the closed ball plus interpolated samples on the sphere
    whose interpolation stencil stays inside B_1.
    """
    g = phi.grid
    w = _Window(g, x0, r)
    best = float(np.max(w.take(phi.values)[w.closed_ball(r)]))
    p0 = g.point(x0)
    dirs = _sphere_directions(g.dim, r, g.h)
    pts = p0[:, None] + r * dirs
    keep = np.sqrt(np.sum(pts**2, axis=0)) < 1 - g.h * math.sqrt(g.dim)
    if keep.any():
        best = max(best, float(np.max(interpolate(phi, pts[:, keep]))))
    return best


def estimate_nondegeneracy(phi: ScalarField, j_max: int | None = None, all_radii: bool = False) -> float:
    """min over boundary x0 and dyadic r >= 4h of sup_{B_r(x0)} phi / r.

    ``all_radii`` scans every r = k h / 2 >= 4h instead of the dyadic family
    (slow; used as an oracle).
    """
    _require_state(phi)
    g = phi.grid
    mask = mask_from_state(phi)
    nodes, Rs = _boundary_points(mask)
    best = math.inf
    for x0, R in zip(nodes, Rs):
        if all_radii:
            radii = [k * g.h / 2 for k in range(8, int(2 * R / g.h) + 1)]
        else:
            radii = dyadic_radii(R, 4 * g.h, j_max)
        for r in radii:
            best = min(best, ball_sup(phi, x0, r) / r)
    if best is math.inf:
        raise EstimationError("no admissible (x0, r) pair for nondegeneracy")
    return float(best)


@dataclass
class Thresholds:
    L_max: float = 10.0
    kappa_min: float = 0.05
    c_tol: float = DEFAULT_C_TOL
    mu_min: float = 0.1
    Lambda_max: float = 5.0
    eta_min: float = 0.1

    @classmethod
    def from_mapping(cls, m) -> "Thresholds":
        m = dict(m or {})
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in m.items()})


@dataclass
class Verdict:
    passed: bool
    value: float | None
    threshold: str
    error: str | None = None


@dataclass
class HypothesisReport:
    L_hat: float
    kappa_hat: float
    subharmonic_defect: float
    mu_hat: float
    Lambda_hat: float
    eta_hat: float
    verdicts: dict[str, Verdict]
    meta: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        return {
            "L_hat": num(self.L_hat),
            "kappa_hat": num(self.kappa_hat),
            "subharmonic_defect": num(self.subharmonic_defect),
            "mu_hat": num(self.mu_hat),
            "Lambda_hat": num(self.Lambda_hat),
            "eta_hat": num(self.eta_hat),
            "verdicts": {
                k: {"pass": v.passed, "value": num(v.value), "threshold": v.threshold, "error": v.error}
                for k, v in sorted(self.verdicts.items())
            },
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def full_report(phi: ScalarField, thresholds: Thresholds | dict | None = None) -> HypothesisReport:
    """Run every estimator and compare against ``thresholds``.

    Estimator failures become failed verdicts carrying the error message.
    """
    _require_state(phi)
    th = thresholds if isinstance(thresholds, Thresholds) else Thresholds.from_mapping(thresholds)
    g = phi.grid
    verdicts: dict[str, Verdict] = {}
    nan = math.nan

    def attempt(fn, *args):
        try:
            return fn(*args), None
        except (EstimationError, EmptyDomainError) as exc:
            return nan, str(exc)

    try:
        mask = mask_from_state(phi)
        err_a = None
    except EmptyDomainError as exc:
        mask, err_a = None, str(exc)
    ok_a = mask is not None and bool(np.all(phi.values >= 0)) and bool(np.all(phi.values[~g.in_ball] == 0))
    verdicts["a"] = Verdict(ok_a, None, "phi >= 0, phi > 0 exactly on Omega, phi = 0 off B_1", err_a)

    L_hat = estimate_lipschitz(phi)
    verdicts["b"] = Verdict(0 < L_hat <= th.L_max, L_hat, f"0 < L_hat <= {th.L_max}")

    if mask is None:
        kappa, err = nan, err_a
    else:
        kappa, err = attempt(estimate_kappa, phi, distance_transform(mask))
    verdicts["c"] = Verdict(err is None and kappa >= th.kappa_min, kappa, f"kappa_hat >= {th.kappa_min}", err)

    defect = subharmonic_defect(phi)
    tol_sub = subharmonic_tolerance(L_hat, g.h, th.c_tol)
    verdicts["d"] = Verdict(defect >= -tol_sub, defect, f"defect >= -{tol_sub:.6g} (c_tol * L_hat / h)")

    if mask is None:
        mu, err = nan, err_a
    else:
        mu, err = attempt(estimate_density, mask)
    verdicts["e"] = Verdict(err is None and mu >= th.mu_min, mu, f"mu_hat >= {th.mu_min}", err)

    lam, err = attempt(estimate_level_constant, phi, L_hat) if mask is not None else (nan, err_a)
    verdicts["f"] = Verdict(err is None and lam <= th.Lambda_max, lam, f"Lambda_hat <= {th.Lambda_max}", err)

    eta, err = attempt(estimate_nondegeneracy, phi) if mask is not None else (nan, err_a)
    verdicts["g"] = Verdict(err is None and eta >= th.eta_min, eta, f"eta_hat >= {th.eta_min}", err)

    meta = {
        "n": g.n,
        "dim": g.dim,
        "h": g.h,
        "radii": {
            "rule": "r = 2^-j (1 - |x0|)",
            "density_floor": 4 * g.h,
            "level_floor": 8 * g.h,
            "nondegeneracy_floor": 4 * g.h,
            "kappa_dist_floor": 2 * g.h,
        },
        "t_grid": {"rule": "t = 2^-m, r t >= 2 L_hat h", "t_max": 1.0, "floor_rt": 2 * L_hat * g.h},
        "thresholds": asdict(th),
        "tol_sub": tol_sub,
        "origin_on_boundary": bool(mask is not None and mask.boundary[g.origin]),
    }
    return HypothesisReport(L_hat, kappa, defect, mu, lam, eta, verdicts, meta)
