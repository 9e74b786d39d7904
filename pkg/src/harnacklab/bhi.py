"""Boundary Harnack checks for pairs of positive harmonic functions.

All checks act on node values. The pair (u, v) is normalized so that
u(P) = v(P) at a reference node P. Nodes where both u and v fall below
``floor * max u`` on the ball under inspection are excluded from ratio
statistics: there the discrete ratio is dominated by the one-cell layer at
the boundary. Excluded nodes are counted in every report.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BhiError, IncomparableError
from .grid import ScalarField, ball_nodes, discrete_laplacian

DEFAULT_FLOOR = 1e-3
RELIABLE_MIN = 10


def _node(x) -> tuple[int, ...]:
    return tuple(int(i) for i in x)


def _ball_mask(grid, center, r: float) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    m[ball_nodes(grid, np.asarray(center, dtype=float), r)] = True
    return m


def _center_point(grid, center):
    if center is None:
        return np.zeros(grid.dim)
    c = np.asarray(center)
    return grid.point(c) if np.issubdtype(c.dtype, np.integer) else c.astype(float)


def _omega(u: ScalarField, v: ScalarField, domain) -> np.ndarray:
    if domain is not None:
        return np.asarray(getattr(domain, "inside", domain), dtype=bool)
    mask = getattr(u, "mask", None) or getattr(v, "mask", None)
    if mask is not None:
        return mask.inside
    return (u.values > 0) | (v.values > 0)


def normalize_pair(u: ScalarField, v: ScalarField, P):
    """Return v scaled so that v(P) = u(P), and the scale factor."""
    P = _node(P)
    up, vp = float(u[P]), float(v[P])
    if up <= 0 and vp <= 0:
        raise BhiError(f"both functions vanish at the normalization node {P}")
    if up <= 0 or vp <= 0:
        raise IncomparableError(f"u(P) = {up:.4g}, v(P) = {vp:.4g}: the pair cannot be normalized")
    s = up / vp
    return v.values * s, s


def _admitted(uv, vv, region, floor):
    ref = float(np.max(uv[region])) if region.any() else 0.0
    low = (uv < floor * ref) & (vv < floor * ref)
    return region & ~low, region & low


def _spread(uv, vv, nodes) -> float:
    a, b = uv[nodes], vv[nodes]
    if np.any((a <= 0) != (b <= 0)):
        return math.inf
    pos = (a > 0) & (b > 0)
    if not pos.any():
        return 1.0
    q = a[pos] / b[pos]
    return float(max(np.max(q), np.max(1 / q)))


@dataclass
class OscLevel:
    r: float
    osc: float
    count: int
    excluded: int
    reliable: bool
    M_hat: float = math.nan
    M_pair: float = math.nan
    decay_factor: float = math.nan
    predicted: float = math.nan
    within: bool | None = None


@dataclass
class BhiReport:
    M: float
    rho: float
    R: float
    delta: float
    P: tuple
    center: tuple
    floor: float
    admitted: int
    excluded: int
    levels: list = field(default_factory=list)
    alpha: float = math.nan
    C: float = math.nan
    alpha_floor: float = math.nan

    def __post_init__(self):
        if not self.M >= 1:
            raise BhiError(f"comparability constant {self.M} below 1")
        if not 0 < self.rho < self.R <= 1:
            raise BhiError(f"need 0 < rho < R <= 1, got rho={self.rho}, R={self.R}")

    @property
    def decay_factors(self) -> list[float]:
        return [lv.decay_factor for lv in self.levels[1:]]

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
            return x

        d = asdict(self)
        d["P"] = list(self.P)
        d["center"] = list(self.center)
        d["levels"] = [{k: clean(val) for k, val in lv.items()} for lv in d["levels"]]
        return {k: clean(val) for k, val in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def verify_inequality(
    u: ScalarField,
    v: ScalarField,
    P,
    rho: float,
    floor: float = DEFAULT_FLOOR,
    center=None,
    R: float = 0.8,
    delta: float = 0.1,
    domain=None,
) -> BhiReport:
    """Two-sided comparability constant of the normalized pair on B_rho(center)."""
    g = u.grid
    P = _node(P)
    inside = _omega(u, v, domain)
    if not inside[P]:
        raise BhiError(f"normalization node {P} is not inside the domain")
    vv, _ = normalize_pair(u, v, P)
    c = _center_point(g, center)
    region = _ball_mask(g, c, rho) & inside
    keep, low = _admitted(u.values, vv, region, floor)
    M = _spread(u.values, vv, keep) if keep.any() else 1.0
    return BhiReport(
        M=M,
        rho=rho,
        R=R,
        delta=delta,
        P=P,
        center=tuple(float(x) for x in c),
        floor=floor,
        admitted=int(keep.sum()),
        excluded=int(low.sum()),
    )


def default_normalization_node(phi: ScalarField, center=None, R: float = 0.8, delta: float = 0.1):
    """Node of B_(R/2)(center) ∩ {phi > delta R} with the largest phi (row-major ties)."""
    g = phi.grid
    c = _center_point(g, center)
    region = _ball_mask(g, c, R / 2) & (phi.values > delta * R)
    if not region.any():
        raise BhiError("B_R/2 ∩ {phi > delta R} is empty")
    vals = np.where(region, phi.values, -np.inf)
    return _node(np.unravel_index(int(np.argmax(vals)), g.shape))


def max_levels(r0: float, h: float, cap: int = 8) -> int:
    """Number of dyadic levels r0 2^-k that stay >= 8h."""
    k = 0
    while k < cap and r0 * 2.0**-k >= 8 * h * (1 - 1e-9):
        k += 1
    return k


def oscillation_decay(
    u: ScalarField,
    v: ScalarField,
    x0,
    r0: float,
    levels: int,
    floor: float = DEFAULT_FLOOR,
    P=None,
    domain=None,
    tol_osc: float = 1e-9,
) -> list[OscLevel]:
    """Oscillation of u/v on dyadic balls B_(r0 2^-k)(x0) ∩ Omega.

    For each step the constant ``M_hat`` is the comparability constant, on
    the admitted nodes of the smaller ball, of the nonnegative pair
    (u - m v, v) or (M' v - u, v), whichever is larger at the node where v
    peaks (m, M' are the extremes of u/v on the larger ball), normalized at
    that node. The step is checked against ``1 - 1/(2 M_hat)``; ``M_pair`` is
    the plain comparability constant of (u, v) on the larger ball.
    """
    g = u.grid
    inside = _omega(u, v, domain)
    vv = normalize_pair(u, v, P)[0] if P is not None else v.values.astype(float)
    c = _center_point(g, x0)
    out: list[OscLevel] = []
    sets = []
    for k in range(levels):
        r = r0 * 2.0**-k
        if r < 8 * g.h * (1 - 1e-9):
            raise BhiError(f"radius {r:.4g} at level {k} is below 8h")
        region = _ball_mask(g, c, r) & inside
        keep, low = _admitted(u.values, vv, region, floor)
        keep &= (u.values > 0) & (vv > 0)
        q = u.values[keep] / vv[keep]
        osc = float(np.ptp(q)) if q.size else 0.0
        reliable = int(keep.sum()) >= RELIABLE_MIN
        lv = OscLevel(r, osc, int(keep.sum()), int(low.sum()), reliable)
        lv.M_pair = _spread(u.values, vv, keep) if keep.any() else math.nan
        sets.append((keep, q))
        out.append(lv)
    for k in range(1, levels):
        prev, cur = out[k - 1], out[k]
        keep_prev, q_prev = sets[k - 1]
        keep_cur, _ = sets[k]
        if prev.osc > 0:
            cur.decay_factor = cur.osc / prev.osc
        elif cur.osc == 0:
            cur.decay_factor = 0.0
        if not (prev.reliable and cur.reliable) or prev.osc == 0:
            continue
        m, Mx = float(q_prev.min()), float(q_prev.max())
        vals_v = np.where(keep_cur, vv, -np.inf)
        Pk = np.unravel_index(int(np.argmax(vals_v)), g.shape)
        lower = u.values - m * vv
        upper = Mx * vv - u.values
        w = lower if lower[Pk] >= upper[Pk] else upper
        wq = w[keep_cur] / vv[keep_cur]
        ref = w[Pk] / vv[Pk]
        with np.errstate(divide="ignore"):
            rel = np.where(wq > 0, wq / ref, 0.0)
            cur.M_hat = float(max(np.max(rel), np.max(np.where(rel > 0, 1 / rel, np.inf))))
        cur.predicted = 1 - 1 / (2 * cur.M_hat)
        cur.within = bool(cur.osc <= prev.osc * cur.predicted + tol_osc * max(1.0, prev.osc))
    return out


def ladder_csv(levels: list[OscLevel]) -> str:
    buf = io.StringIO()
    buf.write("r,osc,decay_factor\n")
    for lv in levels:
        buf.write(f"{lv.r:.17g},{lv.osc:.17g},{lv.decay_factor:.17g}\n")
    return buf.getvalue()


def fit_holder(osc_sequence) -> tuple[float, float]:
    """Least-squares fit osc = C r^alpha over (r, osc) pairs.

    All-zero oscillations return (inf, 0.0): the ratio is constant.
    """
    pts = [(float(r), float(o)) for r, o in osc_sequence]
    if len(pts) < 3:
        raise BhiError("need at least 3 scales for a power-law fit")
    if all(o == 0 for _, o in pts):
        return math.inf, 0.0
    if any(o <= 0 for _, o in pts):
        raise BhiError("oscillations must be all positive or all zero")
    lr = np.log([r for r, _ in pts])
    lo = np.log([o for _, o in pts])
    slope, intercept = np.polyfit(lr, lo, 1)
    return float(slope), float(math.exp(intercept))


def holder_floor(decay_factors) -> float:
    """Exponent implied by contracting by the worst observed factor per halving, i.e. (worst)^4 per 1/16 scale."""
    f = [x for x in decay_factors if math.isfinite(x)]
    if not f:
        return math.nan
    worst = max(f)
    if worst <= 0:
        return math.inf
    if worst >= 1:
        return 0.0
    return -math.log(worst**4) / math.log(16)


def bhi_report(
    u: ScalarField,
    v: ScalarField,
    P,
    rho: float,
    r0: float,
    levels: int | None = None,
    floor: float = DEFAULT_FLOOR,
    center=None,
    R: float = 0.8,
    delta: float = 0.1,
    domain=None,
) -> BhiReport:
    """verify_inequality plus the oscillation ladder and Hölder fit around ``center``."""
    rep = verify_inequality(u, v, P, rho, floor, center, R, delta, domain)
    if levels is None:
        levels = max_levels(r0, u.grid.h)
    ladder = oscillation_decay(u, v, center if center is not None else u.grid.origin, r0, levels, floor, P, domain)
    rep.levels = ladder
    reliable = [(lv.r, lv.osc) for lv in ladder if lv.reliable]
    if len(reliable) >= 3:
        rep.alpha, rep.C = fit_holder(reliable)
    rep.alpha_floor = holder_floor(rep.decay_factors)
    return rep


# ---- Step 2: growth and weak integrability ---------------------------------


@dataclass(frozen=True)
class GrowthBound:
    p: float
    C: float
    scale: float
    nodes: int

    def at(self, p: float, w: np.ndarray, phi: np.ndarray, sel: np.ndarray) -> float:
        return float(np.max(w[sel] * phi[sel] ** p))


def normalize_level(w: ScalarField, phi: ScalarField, delta: float) -> tuple[np.ndarray, float]:
    """w divided by its max over B_1 ∩ {phi > delta}."""
    sel = phi.grid.in_ball & (phi.values > delta)
    if not sel.any():
        raise BhiError("normalization set B_1 ∩ {phi > delta} is empty")
    top = float(np.max(w.values[sel]))
    if top <= 0:
        raise BhiError("w vanishes on the normalization set")
    return w.values / top, top


def _growth_nodes(phi: ScalarField, L_hat: float) -> np.ndarray:
    g = phi.grid
    return (g.radius < 0.5) & (phi.values >= 2 * g.h * L_hat)


def growth_bound_check(w: ScalarField, phi: ScalarField, delta: float, L_hat: float | None = None) -> GrowthBound:
    """Exponent p and constant C with w <= C phi^-p on B_1/2 ∩ Omega (nodes with phi >= 2 h L).

    p is the negated log-log slope of the largest w per dyadic phi-bin
    (clipped at 0); C is then the smallest constant at that p.
    """
    from .hypotheses import estimate_lipschitz

    if L_hat is None:
        L_hat = estimate_lipschitz(phi)
    wn, top = normalize_level(w, phi, delta)
    sel = _growth_nodes(phi, L_hat)
    if not sel.any():
        raise BhiError("no node of B_1/2 with phi >= 2hL")
    f = phi.values[sel]
    ww = wn[sel]
    bins = np.floor(np.log2(f)).astype(int)
    xs, ys = [], []
    for b in np.unique(bins):
        top_w = float(np.max(ww[bins == b]))
        if top_w > 0:
            xs.append((b + 0.5) * math.log(2))
            ys.append(math.log(top_w))
    p = 0.0
    if len(xs) >= 2:
        p = max(0.0, -float(np.polyfit(xs, ys, 1)[0]))
    C = float(np.max(ww * f**p))
    return GrowthBound(p, C, top, int(sel.sum()))


def growth_constant(w: ScalarField, phi: ScalarField, delta: float, p: float, L_hat: float) -> float:
    """Smallest C with w <= C phi^-p on the growth nodes, for a prescribed p."""
    wn, _ = normalize_level(w, phi, delta)
    sel = _growth_nodes(phi, L_hat)
    return float(np.max(wn[sel] * phi.values[sel] ** p))


def integral_bound(C: float, p: float, alpha: float, Lambda_hat: float, dim: int) -> float:
    """C^alpha |B_1/2| (1 + Lambda alpha p / (1 - alpha p)), the level-set estimate of the integral."""
    ap = alpha * p
    if not ap < 1:
        return math.inf
    half_ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * 0.5**dim
    return C**alpha * half_ball * (1 + Lambda_hat * ap / (1 - ap))


@dataclass(frozen=True)
class IntegrabilityReport:
    eps: float
    integral_B1: float
    integral_half: float
    sup_half: float
    sup_quarter: float
    defect: float
    passed: bool | None


def weak_integrability_bound(w, phi: ScalarField, eps: float, M_cfg: float | None = None) -> IntegrabilityReport:
    """Node-sum integrals of w^eps over B_1 and B_1/2, and sups over B_1/2 and B_1/4.

    When the B_1 integral is at most 1 and ``M_cfg`` is given, the verdict
    is sup_(B_1/2) w <= M_cfg; otherwise it is None (not applicable).
    """
    vals = w if isinstance(w, np.ndarray) else w.values
    g = phi.grid
    if np.any(vals < 0):
        raise BhiError("w has negative nodes")
    vals = np.where(g.in_ball, vals, 0.0)
    cell = g.h**g.dim
    powered = np.where(vals > 0, vals, 0.0) ** eps
    powered = np.where(vals > 0, powered, 0.0)
    i1 = float(np.sum(powered[g.in_ball])) * cell
    ih = float(np.sum(powered[g.radius < 0.5])) * cell
    sup_half = float(np.max(vals[g.radius < 0.5]))
    sup_quarter = float(np.max(vals[g.radius < 0.25]))
    defect = float(np.min(discrete_laplacian(vals, g.h)[g.interior]))
    passed = None
    if M_cfg is not None and i1 <= 1:
        passed = sup_half <= M_cfg
    return IntegrabilityReport(eps, i1, ih, sup_half, sup_quarter, defect, passed)


# ---- Step 3 and the one-step decay ------------------------------------------


def step3_pair_check(
    u: ScalarField,
    v: ScalarField,
    P,
    phi: ScalarField,
    rho: float = 0.5,
    delta: float = 0.1,
    C_max: float = 16.0,
    center=None,
):
    """Smallest C* = 2^j with C* u - v >= 0 and C* v - u >= 0 on B_rho ∩ {phi > delta rho}.

    Returns (C_star, passed); C_star is inf if some node has exactly one of u, v zero.
    """
    vv, _ = normalize_pair(u, v, P)
    g = u.grid
    region = _ball_mask(g, _center_point(g, center), rho) & (phi.values > delta * rho)
    if not region.any():
        raise BhiError("B_rho ∩ {phi > delta rho} is empty")
    spread = _spread(u.values, vv, region)
    if not math.isfinite(spread):
        return math.inf, False
    j = max(0, math.ceil(math.log2(spread) - 1e-12))
    C_star = 2.0**j
    # guard the rounding in log2: the returned power must really work
    while np.any(C_star * u.values[region] < vv[region]) or np.any(C_star * vv[region] < u.values[region]):
        C_star *= 2
    return C_star, C_star <= C_max


@dataclass(frozen=True)
class DeGiorgiCheck:
    max_half: float
    bound: float
    zero_fraction: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.max_half <= self.bound + self.slack


def de_giorgi_check(w: ScalarField, mu: float | None = None, slack_h: float = 5.0) -> DeGiorgiCheck:
    """max over B_1/2 of w against 1 - 8^-d mu for subharmonic 0 <= w <= 1.

    ``mu`` defaults to the zero-set fraction of w over the nodes of B_1/4.
    """
    g = w.grid
    vals = w.values
    if np.any(vals < 0) or np.any(vals[g.in_ball] > 1 + 1e-12):
        raise BhiError("w must satisfy 0 <= w <= 1 on B_1")
    quarter = g.radius < 0.25
    frac = float(np.mean(vals[quarter] == 0))
    mu = frac if mu is None else mu
    if frac < mu:
        raise BhiError(f"zero-set fraction {frac:.4f} in B_1/4 is below mu = {mu:.4f}")
    bound = 1 - 8.0 ** (-g.dim) * mu
    return DeGiorgiCheck(float(np.max(vals[g.radius < 0.5])), bound, frac, slack_h * g.h)
