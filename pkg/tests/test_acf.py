import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from harnacklab import domains
from harnacklab.acf import (
    AcfProfile,
    acf_phi,
    check_monotone,
    dirichlet_integral,
    halfplane_pair,
    homogeneous_exponent,
    sector_pair,
    truncate_component,
)
from harnacklab.errors import AcfError
from harnacklab.grid import ScalarField, build_grid

import oracles

RADII = [round(0.1 * k, 10) for k in range(1, 10)]


@pytest.fixture(scope="module")
def flat_pair():
    return halfplane_pair(build_grid(2, 257))


def test_truncation_single_component():
    phi = domains.builtin("halfspace", 2, 65)
    g = phi.grid
    t = 0.1
    out = truncate_component(phi, t, g.node([0.0, 0.5]))
    np.testing.assert_allclose(out.values, np.maximum(phi.values - t, 0.0), atol=1e-15)
    assert out.role == "state"


def test_truncation_selects_one_bump():
    phi = domains.two_bump(build_grid(2, 129))
    g = phi.grid
    out = truncate_component(phi, 0.01, g.node([-0.5, 0.1]))
    assert np.all(out.values[g.coords[0] > 0] == 0)
    assert np.any(out.values[g.coords[0] < 0] > 0)


def test_truncation_seed_below_level():
    phi = domains.builtin("halfspace", 2, 65)
    with pytest.raises(AcfError):
        truncate_component(phi, 0.5, phi.grid.node([0.0, 0.25]))


def test_gap_minimizer_truncations_are_disjoint(gap):
    phi = gap.phi
    g = phi.grid
    up = truncate_component(phi, 0.05, g.node([0.0, 0.8]))
    down = truncate_component(phi, 0.05, g.node([0.0, -0.8]))
    assert not np.any((up.values > 0) & (down.values > 0))
    labels = oracles.flood_labels(phi.values > 0.05)
    assert labels[g.node([0.0, 0.8])] != labels[g.node([0.0, -0.8])]
    assert np.array_equal(up.values > 0, labels == labels[g.node([0.0, 0.8])])


def test_half_disk_integral_against_quadrature():
    # |grad x_2^+|^2 = 1 on the upper half disk; numeric quadrature of the area
    area, _ = integrate.quad(lambda y: 2 * math.sqrt(max(0.0, 0.25 - y * y)), 0, 0.5)
    assert area == pytest.approx(math.pi * 0.25 / 2, rel=1e-9)
    psi, _ = halfplane_pair(build_grid(2, 257))
    assert dirichlet_integral(psi, 0.5) == pytest.approx(area, rel=0.01)


def test_halfplane_profile_is_constant(flat_pair):
    prof = acf_phi(*flat_pair, RADII)
    target = math.pi**2 / 4
    rel = np.abs(np.asarray(prof.phi_values) - target) / target
    assert np.max(rel) <= 0.05
    assert prof.monotone_defect <= 0.02
    assert check_monotone(prof, 0.02).passed


def test_zero_partner_gives_zero_profile(flat_pair):
    psi1, _ = flat_pair
    zero = ScalarField(psi1.grid, np.zeros(psi1.grid.shape))
    prof = acf_phi(psi1, zero, RADII)
    assert all(v == 0 for v in prof.phi_values)
    with pytest.raises(AcfError, match="degenerate profile"):
        check_monotone(prof, 0.02)


@pytest.mark.parametrize("c", [0.5, 3.0, 7.25])
def test_homogeneity_c4(c):
    p1, p2 = halfplane_pair(build_grid(2, 65))
    base = acf_phi(p1, p2, [0.3, 0.6])
    scaled = acf_phi(p1.scaled(c), p2.scaled(c), [0.3, 0.6])
    np.testing.assert_allclose(scaled.phi_values, c**4 * np.asarray(base.phi_values), rtol=1e-13)


def test_sector_profile_grows_with_power_counting_exponent():
    prof = acf_phi(*sector_pair(build_grid(2, 257)), RADII)
    lp = prof.ln_phi
    assert np.all(np.diff(lp) > 0)
    expected = homogeneous_exponent(2, 2)
    assert expected == 4
    assert prof.slope() > 10 * 0.02
    assert abs(prof.slope() - expected) <= 0.15 * expected


def test_gap_minimizer_pair_passes(gap):
    phi = gap.phi
    g = phi.grid
    up = truncate_component(phi, 0.05, g.node([0.0, 0.8]))
    down = truncate_component(phi, 0.05, g.node([0.0, -0.8]))
    # the two phases meet B_r only once r clears the gap around the origin
    prof = acf_phi(up, down, [0.5, 0.6, 0.7, 0.8, 0.9])
    assert min(prof.phi_values) > 0
    assert check_monotone(prof, 0.05).passed


def test_overlapping_supports_rejected():
    g = build_grid(2, 65)
    p1, _ = halfplane_pair(g)
    with pytest.raises(AcfError, match="overlap"):
        acf_phi(p1, p1, RADII)


def test_radius_limits():
    p1, p2 = halfplane_pair(build_grid(2, 65))
    with pytest.raises(AcfError):
        acf_phi(p1, p2, [0.05, 0.5])
    with pytest.raises(AcfError):
        acf_phi(p1, p2, [0.5, 1.0])


def test_profile_validation_and_csv():
    with pytest.raises(AcfError):
        AcfProfile((0.2, 0.1), (1.0, 1.0), (0.0, 0.0))
    prof = AcfProfile((0.1, 0.2, 0.3), (1.0, 2.0, 2.0), (0.5, 0.5, 0.5))
    lines = prof.to_csv().splitlines()
    assert lines[0] == "r,phi,alpha,ln_phi"
    assert len(lines) == 4
    assert prof.monotone_defect == 0.0


def test_check_needs_three_radii():
    with pytest.raises(AcfError):
        check_monotone(AcfProfile((0.1, 0.2), (1.0, 1.0), (0.0, 0.0)), 0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 100.0), min_size=3, max_size=8))
def test_defect_nonpositive_for_increasing_profiles(vals):
    vals = sorted(vals)
    radii = tuple(0.1 * (k + 1) for k in range(len(vals)))
    prof = AcfProfile(radii, tuple(vals), tuple(0.0 for _ in vals))
    assert prof.monotone_defect <= 0.0
    assert check_monotone(prof, 0.0).passed
