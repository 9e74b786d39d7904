import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab import domains, pipeline
from harnacklab.chains import (
    HarnackChain,
    NotConnected,
    admissible_points,
    annulus_argmax,
    chain_transfer_bound,
    connect_away,
    escape_chain,
    improving_step,
    max_steps,
    near_boundary_seeds,
    step_ratio,
    superlevel_set,
    tau_scan,
)
from harnacklab.errors import ChainError
from harnacklab.grid import ScalarField, build_grid, distance_transform, mask_from_state

import oracles

N_MAX = math.ceil(math.log(2) / math.log(1.05))


def dist_of(phi):
    return distance_transform(mask_from_state(phi))


@pytest.fixture(scope="module")
def flat():
    phi = domains.builtin("halfspace", 2, 257)
    return phi, dist_of(phi)


def test_flat_step_doubles(flat):
    phi, dist = flat
    g = phi.grid
    x0 = (g.center, g.center + 8)
    y0 = improving_step(phi, dist, x0)
    assert y0 == (g.center, g.center + 16)
    assert step_ratio(phi, x0, y0) == 2.0


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_flat_step_scaling(flat, c):
    phi, dist = flat
    g = phi.grid
    x0 = (g.center, g.center + 8)
    scaled = domains.halfspace(g, c)
    assert improving_step(scaled, dist, x0) == improving_step(phi, dist, x0)


def test_step_preconditions(flat):
    phi, dist = flat
    g = phi.grid
    with pytest.raises(ChainError):
        improving_step(phi, dist, (g.center, g.center + 1))  # dist = h < 2h
    with pytest.raises(ChainError):
        improving_step(phi, dist, (g.center, g.center - 4))  # outside
    with pytest.raises(ChainError):
        improving_step(phi, dist, (g.center, g.center + 100))  # 3 dist >= 1 - |x|


def test_step_failure_carries_ratio():
    # from the top of a cone the sphere of radius dist sits on the zero set, up to the h/2 shell
    g = build_grid(2, 129)
    phi = domains.ball(g, radius=0.3)
    with pytest.raises(ChainError) as err:
        improving_step(phi, dist_of(phi), g.origin)
    assert 0 <= err.value.ratio <= (g.h / 2) / 0.3 + 1e-12


def test_steps_on_minimizer_match_exhaustive_scan(tilted):
    phi = tilted.phi
    dist = dist_of(phi)
    seeds = near_boundary_seeds(phi, dist, 50, np.random.default_rng(0))
    assert len(seeds) == 50
    for x0 in seeds:
        y0 = improving_step(phi, dist, x0)
        assert phi[y0] / phi[x0] >= 1.05
        assert phi[y0] == oracles.exhaustive_annulus_max(phi.values, phi.grid, x0, dist[x0])


def test_flat_escape_single_step(flat):
    phi, dist = flat
    g = phi.grid
    delta = 0.1
    x0 = g.node([0.0, 0.6 * delta])
    assert phi[x0] == pytest.approx(0.6 * delta, abs=g.h)
    chain = escape_chain(phi, dist, x0, delta)
    assert chain.N == 1
    assert chain.terminal_level > delta


def test_escape_noop_above_delta(flat):
    phi, dist = flat
    x0 = phi.grid.node([0.0, 0.2])
    chain = escape_chain(phi, dist, x0, 0.1)
    assert chain.N == 0 and chain.H_bound == 1.0


def test_escape_rejects_low_start(flat):
    phi, dist = flat
    with pytest.raises(ChainError):
        escape_chain(phi, dist, phi.grid.node([0.0, 0.02]), 0.1)


def test_minimizer_escape_within_bound(tilted):
    phi = tilted.phi
    dist = dist_of(phi)
    seeds = near_boundary_seeds(phi, dist, 20, np.random.default_rng(1), delta=0.1)
    for x0 in seeds:
        chain = escape_chain(phi, dist, x0, 0.1)
        assert chain.N <= N_MAX
        assert chain.N <= max_steps(phi[x0], 0.1, 0.05)


def test_max_steps():
    assert max_steps(0.05, 0.1, 0.05) == N_MAX == 15
    assert max_steps(0.2, 0.1, 0.05) == 0


def test_transfer_constant_field(flat):
    phi, dist = flat
    chain = escape_chain(phi, dist, phi.grid.node([0.0, 0.06]), 0.1)
    one = ScalarField(phi.grid, np.ones(phi.grid.shape))
    check = chain_transfer_bound(chain, one, H_cfg=1.0)
    assert check.per_step == 1.0 and check.passed


def test_transfer_linear_field_doubles(flat):
    phi, dist = flat
    g = phi.grid
    chain = escape_chain(phi, dist, (g.center, g.center + 8), 0.1)
    w = ScalarField(g, np.maximum(g.coords[-1], 0.0) + (g.coords[-1] <= 0))
    check = chain_transfer_bound(chain, w)
    assert check.per_step == 2.0


def test_transfer_random_fields_on_minimizer(tilted):
    phi = tilted.phi
    H = pipeline.calibrated_harnack(2, 129, fields=5, seeds=20)
    fields = pipeline.harmonic_fields(phi, 5, seed=3)
    run = pipeline.run_chains(phi, fields, H, 20, 0.1, 0.05, np.random.default_rng(3))
    assert run.passed
    assert run.worst_transfer <= H


def test_chain_invariants_are_enforced(flat):
    phi, _ = flat
    g = phi.grid
    a, b = (g.center, g.center + 8), (g.center, g.center + 9)
    with pytest.raises(ChainError):
        HarnackChain((a, b), (8 * g.h, 9 * g.h), (phi[a], phi[b]), 0.05, 0.1, h=g.h)


def test_chain_json_fields(flat):
    phi, dist = flat
    chain = escape_chain(phi, dist, phi.grid.node([0.0, 0.06]), 0.1)
    d = chain.to_dict()
    assert set(d) == {"points", "radii", "sigma_achieved", "H_bound", "terminal_level"}
    assert d["sigma_achieved"] == pytest.approx(1.0)


# ---- connectivity ---------------------------------------------------------------


def test_flat_points_connect():
    phi = domains.builtin("halfspace", 2, 129)
    pts = admissible_points(phi, 0.1, 0.8, 0.25, 6, np.random.default_rng(0))
    assert len(pts) == 6
    for p in pts[1:]:
        path = connect_away(phi, pts[0], p, 0.1, 0.8)
        assert path[0] == pts[0] and path[-1] == p
        assert all(phi[x] > 0.04 for x in path)


def test_two_bumps_do_not_connect():
    phi = domains.two_bump(build_grid(2, 129), offset=0.4, radius=0.3, a=-0.1)
    g = phi.grid
    left = g.node([-0.15, 0.05])
    right = g.node([0.15, 0.05])
    res = connect_away(phi, left, right, 0.1, 0.8, tau=0.25)
    assert isinstance(res, NotConnected)
    assert res.label1 != res.label2 and res.label1 > 0 and res.label2 > 0


def test_minimizer_connectivity_matches_labels(tilted):
    phi = tilted.phi
    pts = admissible_points(phi, 0.1, 0.8, 0.25, 10, np.random.default_rng(2))
    labels = oracles.flood_labels(superlevel_set(phi, 0.04, 0.8))
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            res = connect_away(phi, pts[i], pts[j], 0.1, 0.8)
            assert not isinstance(res, NotConnected)
            assert labels[pts[i]] == labels[pts[j]]


def test_tau_scan_reports_largest_working_tau():
    phi = domains.builtin("halfspace", 2, 65)
    assert tau_scan(phi, 0.1, 0.8, [0.1, 0.25, 0.5]) == 0.5


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(4, 30))
def test_argmax_invariant_under_positive_scaling(c, height):
    g = build_grid(2, 65)
    phi = domains.sector(g)
    x0 = (g.center + height, g.center + 3)
    r = 2.5 * g.h
    assert annulus_argmax(phi, x0, r)[0] == annulus_argmax(phi.scaled(c), x0, r)[0]
