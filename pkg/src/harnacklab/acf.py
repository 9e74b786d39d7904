"""Two-phase monotonicity functional for disjointly supported functions.

For psi_1, psi_2 with disjoint supports and psi_1(0) = psi_2(0) = 0::

    Phi(r) = r^-4 * I_1(r) * I_2(r),   I_j(r) = integral over B_r of |grad psi_j|^2 / |x|^(d-2)

Gradients are taken on grid edges (forward differences located at edge
midpoints), so a difference across the edge of a support only sees the
one node that is inside. The kernel is regularized as max(|x|, h)^-(d-2)
and the ball indicator is replaced by a one-cell linear ramp in |x|.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .chains import annulus_nodes
from .errors import AcfError
from .grid import ScalarField


def truncate_component(phi: ScalarField, level: float, seed) -> ScalarField:
    """(phi - level)^+ on the face-connected component of {phi > level} containing seed."""
    seed = tuple(int(i) for i in seed)
    if not phi[seed] > level:
        raise AcfError(f"seed value {phi[seed]:.4g} is not above the level {level:.4g}")
    labels, _ = ndimage.label(phi.values > level)
    comp = labels == labels[seed]
    vals = np.where(comp, phi.values - level, 0.0)
    role = "state" if phi.role == "state" else "auxiliary"
    return ScalarField(phi.grid, vals, role)


def _edge_terms(psi: ScalarField):
    """Per axis: squared forward differences over h^2 and midpoint radii."""
    g = psi.grid
    out = []
    for axis in range(g.dim):
        lo = [slice(None)] * g.dim
        hi = [slice(None)] * g.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        diff = (psi.values[tuple(hi)] - psi.values[tuple(lo)]) / g.h
        mid = [c[tuple(lo)] for c in g.coords]
        mid[axis] = mid[axis] + 0.5 * g.h
        rad = np.sqrt(sum(m * m for m in mid))
        out.append((diff * diff, rad))
    return out


def dirichlet_integral(psi: ScalarField, r: float) -> float:
    """Weighted Dirichlet integral of psi over B_r, kernel max(|x|, h)^-(d-2)."""
    g = psi.grid
    total = 0.0
    for grad2, rad in _edge_terms(psi):
        weight = np.clip((r - rad) / g.h + 0.5, 0.0, 1.0)
        kernel = np.maximum(rad, g.h) ** (-(g.dim - 2)) if g.dim > 2 else 1.0
        # fixed, flat summation order keeps results bitwise reproducible
        total += float(np.sum((grad2 * kernel * weight).ravel()))
    return total * g.h**g.dim


def sphere_alpha(psi1: ScalarField, psi2: ScalarField, r: float) -> float:
    """Fraction of the discrete sphere | |y| - r | <= h/2 where both functions vanish."""
    g = psi1.grid
    nodes = annulus_nodes(g, np.array(g.origin), r)
    idx = tuple(nodes.T)
    both = (psi1.values[idx] == 0) & (psi2.values[idx] == 0)
    return float(np.mean(both))


@dataclass(frozen=True)
class AcfProfile:
    radii: tuple
    phi_values: tuple
    alpha_values: tuple

    def __post_init__(self):
        r = np.asarray(self.radii)
        if np.any(np.diff(r) <= 0):
            raise AcfError("radii must be strictly increasing")
        if any(v < 0 for v in self.phi_values):
            raise AcfError("negative functional value")
        if any(not 0 <= a <= 1 for a in self.alpha_values):
            raise AcfError("alpha outside [0, 1]")

    @property
    def ln_phi(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.phi_values, dtype=float))

    @property
    def monotone_defect(self) -> float:
        """max_k ln Phi(r_k) - ln Phi(r_k+1); +inf if a later value drops to zero."""
        lp = self.ln_phi
        if len(lp) < 2:
            return 0.0
        with np.errstate(invalid="ignore"):
            d = lp[:-1] - lp[1:]
        d = np.where(np.isnan(d), 0.0, d)
        return float(np.max(d))

    def slope(self) -> float:
        """Least-squares slope of ln Phi against ln r."""
        return float(np.polyfit(np.log(self.radii), self.ln_phi, 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,phi,alpha,ln_phi\n")
        for r, p, a, lp in zip(self.radii, self.phi_values, self.alpha_values, self.ln_phi):
            buf.write(f"{r:.17g},{p:.17g},{a:.17g},{lp:.17g}\n")
        return buf.getvalue()


def acf_phi(psi1: ScalarField, psi2: ScalarField, radii) -> AcfProfile:
    g = psi1.grid
    if psi2.grid != g:
        raise AcfError("the two functions live on different grids")
    if np.any((psi1.values != 0) & (psi2.values != 0)):
        raise AcfError("supports overlap")
    if psi1[g.origin] != 0 or psi2[g.origin] != 0:
        raise AcfError("both functions must vanish at the origin")
    radii = [float(r) for r in radii]
    for r in radii:
        if r < 4 * g.h * (1 - 1e-9):
            raise AcfError(f"radius {r} below 4h = {4 * g.h}")
        if r >= 1:
            raise AcfError(f"radius {r} not below 1")
    vals, alphas = [], []
    for r in radii:
        i1 = dirichlet_integral(psi1, r)
        i2 = dirichlet_integral(psi2, r)
        vals.append(i1 * i2 / r**4)
        alphas.append(sphere_alpha(psi1, psi2, r))
    return AcfProfile(tuple(radii), tuple(vals), tuple(alphas))


@dataclass(frozen=True)
class MonotoneVerdict:
    passed: bool
    defect: float
    tol: float
    correlation: float

    def to_dict(self) -> dict:
        c = self.correlation
        return {
            "passed": self.passed,
            "defect": self.defect,
            "tol": self.tol,
            "alpha_growth_correlation": None if math.isnan(c) else c,
        }


def check_monotone(profile: AcfProfile, tol: float) -> MonotoneVerdict:
    """Pass iff the largest drop of ln Phi between consecutive radii is <= tol.

    Also reports the correlation between the per-step log-log growth of Phi
    and alpha at the lower radius (NaN when either sequence is constant).
    """
    if len(profile.radii) < 3:
        raise AcfError("need at least 3 radii")
    if any(v == 0 for v in profile.phi_values):
        raise AcfError("degenerate profile")
    lp = profile.ln_phi
    lr = np.log(profile.radii)
    growth = np.diff(lp) / np.diff(lr)
    alpha = np.asarray(profile.alpha_values[:-1])
    if np.ptp(growth) > 0 and np.ptp(alpha) > 0:
        corr = float(np.corrcoef(growth, alpha)[0, 1])
    else:
        corr = float("nan")
    defect = profile.monotone_defect
    return MonotoneVerdict(defect <= tol, defect, tol, corr)


def halfplane_pair(grid) -> tuple[ScalarField, ScalarField]:
    """(x_d)^+ and (x_d)^-: the flat two-phase pair, Phi = (|B_1| / 2)^2 for every r in d = 2."""
    xd = grid.coords[-1]
    return ScalarField(grid, np.maximum(xd, 0.0), "auxiliary"), ScalarField(grid, np.maximum(-xd, 0.0), "auxiliary")


def sector_pair(grid) -> tuple[ScalarField, ScalarField]:
    """2 x_1 x_2 on the first and on the opposite quadrant; Phi grows like r^4."""
    x1, x2 = grid.coords[0], grid.coords[1]
    q = 2 * x1 * x2
    first = np.where((x1 > 0) & (x2 > 0), q, 0.0)
    third = np.where((x1 < 0) & (x2 < 0), q, 0.0)
    return ScalarField(grid, first, "auxiliary"), ScalarField(grid, third, "auxiliary")


def homogeneous_exponent(degree1: float, degree2: float) -> float:
    """Growth exponent of Phi for a pair homogeneous of the given degrees."""
    return 2 * degree1 + 2 * degree2 - 4
