import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import diagonal_instance, random_instance
from dynamics.diagnostics import condition_diagnostics
from dynamics.rates import (
    MobilitySpec,
    RateFamily,
    all_pairs_mobility,
    balance_residual,
    birth_rate,
    check_ceiling,
    death_rate,
    gaussian_mobility,
    glauber_event_rates,
    hop_rate,
    kawasaki_event_rates,
    nearest_neighbour_mobility,
    symmetrize,
)
from intensity.papangelou import intensity_profile
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.dpp import exact_distribution
from utils.errors import NearSingularIntensityError


def test_death_rate_examples():
    assert death_rate(0.37, 1.0) == pytest.approx(1.0)
    assert death_rate(4.0, 0.5) == pytest.approx(0.5)
    assert death_rate(0.0, 0.5) == 0.0


def test_birth_rate_examples():
    assert birth_rate(0.37, 1.0) == pytest.approx(0.37)
    assert birth_rate(4.0, 0.5) == pytest.approx(2.0)
    assert birth_rate(0.0, 0.0) == 0.0


INTENSITIES = hnp.arrays(float, st.integers(1, 8), elements=st.floats(0.0, 40.0))
EXPONENTS = st.floats(0.0, 1.0)


@given(r=INTENSITIES, s=EXPONENTS)
def test_birth_is_intensity_times_death(r, s):
    np.testing.assert_array_equal(birth_rate(r, s), r * death_rate(r, s))


def test_below_threshold_is_zero():
    assert death_rate(1e-13, 0.0) == 0.0
    assert hop_rate(1e-13, 1.0, 1.0, 0.5) == 0.0


def test_hop_rate_examples():
    assert hop_rate(2.0, 8.0, 1.0, 0.5) == pytest.approx(2.0)
    assert hop_rate(0.3, 0.7, 2.0, 1.0) == pytest.approx(1.4)
    assert hop_rate(0.0, 1.0, 1.0, 0.5) == 0.0
    assert hop_rate(0.5, 0.0, 1.0, 0.5) == 0.0


def test_symmetrize_fixes_balanced_rates():
    rx, ry, s = 0.4, 1.3, 0.5
    c_xy = hop_rate(rx, ry, 1.0, s)
    c_yx = hop_rate(ry, rx, 1.0, s)
    assert symmetrize(c_xy, c_yx, rx, ry) == pytest.approx(float(c_xy))


def test_symmetrize_one_way_rate_halves():
    assert symmetrize(3.0, 0.0, 0.5, 0.8) == pytest.approx(1.5)


@settings(max_examples=200)
@given(
    r=hnp.arrays(float, 6, elements=st.floats(0.1, 2.0)),
    c=hnp.arrays(float, (6, 6), elements=st.floats(0.0, 1.0)),
)
def test_symmetrize_is_idempotent(r, c):
    once = symmetrize(c, c.T, r[:, None], r[None, :])
    twice = symmetrize(once, once.T, r[:, None], r[None, :])
    np.testing.assert_allclose(twice, once, atol=1e-12)
    np.testing.assert_allclose(r[:, None] * once, (r[:, None] * once).T, atol=1e-12)


def test_family_validation():
    with pytest.raises(ValueError):
        RateFamily("glauber", s=1.5)
    with pytest.raises(ValueError):
        RateFamily("metropolis")
    with pytest.raises(ValueError):
        RateFamily("kawasaki", s=0.5)
    with pytest.raises(ValueError):
        RateFamily("kawasaki", mobility=-all_pairs_mobility(3))
    with pytest.raises(ValueError):
        RateFamily("glauber", scale=-1.0)


def test_family_zeroes_mobility_diagonal():
    family = RateFamily("kawasaki", mobility=np.ones((3, 3)))
    np.testing.assert_array_equal(np.diag(family.mobility), np.zeros(3))


def test_asymmetric_mobility_is_logged(caplog):
    a = all_pairs_mobility(3)
    a[0, 1] += 0.5
    with caplog.at_level(logging.WARNING, logger="dynamics.rates"):
        family = RateFamily("kawasaki", mobility=a)
    assert family.mobility_asymmetry == pytest.approx(0.5)
    assert "not symmetric" in caplog.text


def test_constant_form():
    family = RateFamily("kawasaki", form="constant", scale=2.0, mobility=all_pairs_mobility(3))
    np.testing.assert_allclose(family.death(np.array([0.5, 0.0])), [2.0, 0.0])
    c = family.hop_matrix(np.array([0.5, 0.2, 0.0]))
    assert c[0, 1] == pytest.approx(2.0)
    assert c[0, 2] == 0.0


def test_power_family_balance_on_all_configurations():
    space, _, interaction = random_instance(6, seed=12, lambda_max=0.85)
    for s in (0.0, 0.5, 1.0):
        family = RateFamily("kawasaki", s=s, mobility=all_pairs_mobility(6))
        worst = max(balance_residual(interaction, Configuration.from_bitmask(m, 6), family) for m in range(64))
        assert worst <= 1e-10


def test_symmetrized_family_keeps_power_rates():
    _, _, interaction = random_instance(5, seed=8)
    profile = intensity_profile(interaction, Configuration.empty(5)).values
    plain = RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5))
    sym = RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5), symmetrize=True)
    np.testing.assert_allclose(sym.hop_matrix(profile), plain.hop_matrix(profile), rtol=1e-12, atol=1e-14)


def test_symmetrize_repairs_constant_form():
    _, _, interaction = random_instance(5, seed=8)
    raw = RateFamily("kawasaki", form="constant", mobility=all_pairs_mobility(5))
    fixed = RateFamily("kawasaki", form="constant", mobility=all_pairs_mobility(5), symmetrize=True)
    config = Configuration(5, (1,))
    assert balance_residual(interaction, config, raw) > 1e-6
    assert balance_residual(interaction, config, fixed) <= 1e-10


def test_asymmetric_mobility_breaks_balance():
    _, _, interaction = random_instance(4, seed=3, lambda_max=0.7)
    a = all_pairs_mobility(4)
    a[0, 1] += 0.5
    family = RateFamily("kawasaki", s=0.5, mobility=a)
    assert balance_residual(interaction, Configuration.empty(4), family) > 1e-3


def test_ceiling_raises():
    family = RateFamily("glauber", s=0.0, ceiling=10.0)
    with pytest.raises(NearSingularIntensityError):
        glauber_event_rates(np.array([0.05]), Configuration(1, (0,)), family, np.ones(1))
    with pytest.raises(NearSingularIntensityError):
        check_ceiling(np.array([1.0, np.nan]))
    assert check_ceiling(np.zeros(0)).size == 0


def test_glauber_event_rates_order():
    family = RateFamily("glauber", s=1.0)
    profile = np.array([0.4, 0.6, 0.8])
    deaths, births = glauber_event_rates(profile, Configuration(3, (1,)), family, np.array([1.0, 2.0, 0.5]))
    np.testing.assert_allclose(deaths, [1.0])
    np.testing.assert_allclose(births, [0.4 * 1.0, 0.8 * 0.5])


def test_kawasaki_two_site_rate():
    k = 0.3
    space, _, interaction = diagonal_instance([k, k])
    family = RateFamily("kawasaki", s=1.0, mobility=all_pairs_mobility(2))
    config = Configuration(2, (0,))
    profile = intensity_profile(interaction, config).values
    removal = np.array([[0.0, k / (1 - k)]])
    rates = kawasaki_event_rates(profile, removal, config, family, space.weights)
    assert rates.shape == (1, 1)
    assert rates[0, 0] == pytest.approx(2 * k / (1 - k))


def test_mobility_builders():
    nn = nearest_neighbour_mobility(4, periodic=True)
    assert nn[0, 3] == 1.0 and nn[0, 2] == 0.0
    assert nearest_neighbour_mobility(4)[0, 3] == 0.0
    g = gaussian_mobility(SiteSpace.from_labels(3), lengthscale=1.0)
    assert np.all(np.diag(g) == 0.0)
    assert g[0, 1] == pytest.approx(np.exp(-0.5))
    a = MobilitySpec("all_pairs", {"value": 2.0, "perturb": [[0, 1, 0.5]]}).build(SiteSpace.from_labels(3))
    assert a[0, 1] == pytest.approx(2.5)
    assert a[1, 0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        MobilitySpec("ring").build(SiteSpace.from_labels(3))


def test_diagnostics_mobility_sup():
    space, _, interaction = random_instance(5, seed=1)
    family = RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5))
    report = condition_diagnostics(interaction, space, family)
    assert report.mobility_sup == pytest.approx(4.0)
    assert report.to_dict()["all_finite"]
    assert {"hop_l1", "hop_l2", "closability_l1", "closability_l2"} <= set(report.expectations)


def test_diagnostics_death_moments_for_product_measure():
    values = [0.2, 0.5, 0.6]
    space, _, interaction = diagonal_instance(values)
    family = RateFamily("glauber", s=0.5)
    table = exact_distribution(interaction, space)
    j = np.array(values) / (1.0 - np.array(values))
    second = 0.0
    for mask in range(8):
        config = Configuration.from_bitmask(mask, 3)
        total = sum(j[x] ** -0.5 for x in config.occupied)
        second += table.probabilities[mask] * total**2
    report = condition_diagnostics(interaction, space, family, table)
    assert report.expectations["death_l2"] == pytest.approx(np.sqrt(second))


def test_diagnostics_birth_moment_matches_brute_force():
    space, _, interaction = random_instance(4, seed=19, weights=[0.5, 1.0, 1.5, 2.0])
    family = RateFamily("glauber", s=1.0)
    table = exact_distribution(interaction, space)
    first = 0.0
    for mask in range(16):
        config = Configuration.from_bitmask(mask, 4)
        r = intensity_profile(interaction, config).values
        first += table.probabilities[mask] * sum(space.weights[x] * r[x] for x in config.vacant())
    report = condition_diagnostics(interaction, space, family, table)
    assert report.expectations["birth_l1"] == pytest.approx(first)


def test_diagnostics_skip_expectations_over_limit():
    space, _, interaction = random_instance(5, seed=1)
    report = condition_diagnostics(interaction, space, RateFamily("glauber"), limit=3)
    assert report.expectations == {}
    assert report.mobility_sup is None
