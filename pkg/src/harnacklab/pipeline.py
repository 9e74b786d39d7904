"""Composite runs shared by the command line and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import domains
from .bhi import BhiReport, bhi_report, default_normalization_node, max_levels
from .chains import (
    SIGMA_MIN,
    calibrate_harnack,
    chain_transfer_bound,
    escape_chain,
    near_boundary_seeds,
)
from .errors import ConfigError
from .grid import ScalarField, distance_transform, load_field, mask_from_state
from .harmonic import random_positive_data, solve_harmonic, solve_many, sphere_data


def harmonic_fields(phi: ScalarField, count: int, seed: int, tol: float = 1e-8):
    """``count`` positive harmonic functions in Omega, vanishing on its boundary inside B_1."""
    rng = np.random.default_rng(seed)
    mask = mask_from_state(phi)
    data = [sphere_data(mask, random_positive_data(phi.grid, rng)) for _ in range(count)]
    return solve_many(mask, data, tol)


def data_function(phi: ScalarField, entry: dict, tol: float = 1e-8, method: str = "amg") -> ScalarField:
    """Build u or v from a data description (see ``config.DATA_KINDS``)."""
    g = phi.grid
    kind = entry["kind"]
    if kind == "random":
        return harmonic_fields(phi, 1, int(entry.get("seed", 0)), tol)[0]
    mask = mask_from_state(phi)
    if kind == "linear":
        tilt = float(entry.get("tilt", 0.0))

        def lin(*x):
            return np.maximum(x[-1], 0.0) * (1 + tilt * x[0])

        return solve_harmonic(mask, lin, tol=tol, method=method)
    if kind == "component":
        node = g.node(np.asarray(entry["point"], dtype=float))
        labels, _ = ndimage.label(mask.inside)
        if labels[node] == 0:
            raise ConfigError(f"point {entry['point']} is not inside the domain")
        return ScalarField(g, np.where(labels == labels[node], phi.values, 0.0), "auxiliary")
    if kind == "file":
        f = load_field(entry["path"])
        if f.grid != g:
            raise ConfigError(f"{entry['path']} lives on a different grid than the domain")
        return f
    raise ConfigError(f"unknown data kind {kind!r}")


def calibrated_harnack(dim: int, n: int, fields: int = 10, seeds: int = 50, delta: float = 0.1,
                       sigma_min: float = SIGMA_MIN, seed: int = 0) -> float:
    """Per-step Harnack constant calibrated on the half-space at the same resolution."""
    phi = domains.builtin("halfspace", dim, n)
    ws = harmonic_fields(phi, fields, seed)
    dist = distance_transform(mask_from_state(phi))
    starts = near_boundary_seeds(phi, dist, seeds, np.random.default_rng(seed), delta=delta)
    return calibrate_harnack(phi, ws, starts, delta, sigma_min)


@dataclass
class ChainRun:
    seeds: list
    chains: list
    transfers: list  # per chain, list of TransferCheck
    H_cfg: float

    @property
    def first_ratios(self) -> list[float]:
        return [c.levels[1] / c.levels[0] for c in self.chains if c.N > 0]

    @property
    def max_N(self) -> int:
        return max((c.N for c in self.chains), default=0)

    @property
    def worst_transfer(self) -> float:
        return max((t.per_step for ts in self.transfers for t in ts), default=1.0)

    @property
    def passed(self) -> bool:
        return all(t.passed for ts in self.transfers for t in ts)

    def summary(self) -> dict:
        fr = self.first_ratios
        return {
            "H_cfg": self.H_cfg,
            "seeds": len(self.seeds),
            "min_first_ratio": min(fr) if fr else None,
            "max_N": self.max_N,
            "worst_step_transfer": self.worst_transfer,
            "passed": self.passed,
        }

    def rows(self):
        for x0, c, ts in zip(self.seeds, self.chains, self.transfers):
            worst = max((t.per_step for t in ts), default=1.0)
            e2e = max((t.end_to_end for t in ts), default=1.0)
            yield list(x0), c.N, c.sigma_achieved, worst, e2e, all(t.passed for t in ts)


def run_chains(phi: ScalarField, fields, H_cfg: float, count: int, delta: float,
               sigma_min: float, rng) -> ChainRun:
    dist = distance_transform(mask_from_state(phi))
    seeds = near_boundary_seeds(phi, dist, count, rng, delta=delta)
    chains, transfers = [], []
    for x0 in seeds:
        c = escape_chain(phi, dist, x0, delta, sigma_min, H_cfg)
        chains.append(c)
        transfers.append([chain_transfer_bound(c, w) for w in fields])
    return ChainRun(seeds, chains, transfers, H_cfg)


def run_bhi(phi: ScalarField, u: ScalarField, v: ScalarField, settings: dict, center=None):
    """BHI report with the configured scales; returns (report, passed).

    Passing means a finite constant and every reliable oscillation step
    within its predicted bound.
    """
    g = phi.grid
    c = np.zeros(g.dim) if center is None else np.asarray(center, dtype=float)
    R, delta = settings["R"], settings["delta"]
    if settings.get("P") is not None:
        P = g.node(np.asarray(settings["P"], dtype=float))
    else:
        P = default_normalization_node(phi, c, R, delta)
    r0 = settings["r0"]
    levels = settings.get("levels") or max_levels(r0, g.h)
    rep: BhiReport = bhi_report(u, v, P, settings["rho"], r0, levels, settings["floor"], c, R, delta,
                                domain=mask_from_state(phi))
    ok = math.isfinite(rep.M) and all(lv.within for lv in rep.levels if lv.within is not None)
    return rep, ok
