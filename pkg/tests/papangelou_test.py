import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import diagonal_instance, instances, random_instance, site_outside
from intensity.factorization import IncrementalCholesky, choldate
from intensity.papangelou import (
    IntensityTracker,
    bound_check,
    intensity,
    intensity_frame,
    intensity_profile,
    naive_intensity,
    removal_profiles,
)
from kernel.interaction import interaction_from_matrix
from kernel.site_space import SiteSpace
from measure.configuration import Configuration


@pytest.fixture
def two_site():
    return interaction_from_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]), SiteSpace.from_labels(2))


def test_schur_complement_hand_example(two_site):
    assert intensity(two_site, Configuration(2, (1,)), 0) == pytest.approx(1.5)


def test_intensity_frame_rows(two_site):
    frame = intensity_frame(two_site)
    assert list(frame.columns) == ["bitmask", "r_0", "r_1"]
    assert frame["bitmask"].tolist() == [0, 1, 2, 3]
    np.testing.assert_allclose(frame[["r_0", "r_1"]].to_numpy(), [[2.0, 2.0], [2.0, 1.5], [1.5, 2.0], [1.5, 1.5]])


def test_empty_configuration_gives_diagonal(two_site):
    assert intensity(two_site, Configuration.empty(2), 0) == pytest.approx(2.0)
    np.testing.assert_allclose(intensity_profile(two_site, Configuration.empty(2)).values, [2.0, 2.0])


def test_occupied_site_rejected(two_site):
    with pytest.raises(ValueError):
        intensity(two_site, Configuration(2, (0,)), 0)


def test_diagonal_interaction_ignores_configuration():
    _, _, interaction = diagonal_instance([0.2, 0.5, 0.75])
    for mask in range(8):
        profile = intensity_profile(interaction, Configuration.from_bitmask(mask, 3)).values
        np.testing.assert_allclose(profile, interaction.diagonal(), atol=1e-12)


def test_bound_check_hand_example(two_site):
    config = Configuration(2, (1,))
    assert intensity(two_site, config, 0) - two_site.matrix[0, 0] == pytest.approx(-0.5)
    # the occupied site contributes r(1, ∅) - J(1, 1) = 0
    assert bound_check(two_site, config) == pytest.approx(0.0, abs=1e-12)


def test_profile_matches_naive_ratio():
    _, _, interaction = random_instance(8, seed=21, lambda_max=0.9)
    gen = np.random.default_rng(0)
    for _ in range(20):
        config = Configuration.from_indicator(gen.random(8) < 0.4)
        profile = intensity_profile(interaction, config).values
        for x in config.vacant():
            assert profile[x] == pytest.approx(naive_intensity(interaction, config, x), rel=1e-10, abs=1e-12)
        for x in config.occupied:
            expected = naive_intensity(interaction, config.remove(x), x)
            assert profile[x] == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_removal_profiles_match_fresh_profiles():
    _, _, interaction = random_instance(7, seed=4, lambda_max=0.85)
    config = Configuration(7, (0, 2, 5))
    rows = removal_profiles(interaction, config)
    assert rows.shape == (3, 7)
    for k, x in enumerate(config.occupied):
        fresh = intensity_profile(interaction, config.remove(x)).values
        for y in config.vacant():
            assert rows[k, y] == pytest.approx(fresh[y], rel=1e-10, abs=1e-12)


@st.composite
def bound_triples(draw):
    instance = draw(instances(max_sites=6))
    x, gamma = draw(site_outside(instance[0].n))
    return instance[2], x, gamma


@settings(max_examples=200, deadline=None)
@given(triple=bound_triples())
def test_bound_holds_on_random_triples(triple):
    interaction, x, gamma = triple
    assert intensity(interaction, gamma, x) <= interaction.matrix[x, x] + 1e-9
    assert intensity(interaction, gamma, x) == pytest.approx(naive_intensity(interaction, gamma, x), rel=1e-9, abs=1e-12)


def test_intensity_is_monotone_in_configuration():
    _, _, interaction = random_instance(6, seed=17, lambda_max=0.9)
    big = Configuration(6, (0, 1, 3, 4))
    small = Configuration(6, (1, 4))
    for x in (2, 5):
        assert intensity(interaction, big, x) <= intensity(interaction, small, x) + 1e-12


def test_singular_interaction_gives_zero_intensity():
    _, _, interaction = random_instance(5, seed=1, lambda_max=0.8, rank=2)
    config = Configuration(5, (0, 1, 2))
    assert intensity(interaction, config, 3) == 0.0
    np.testing.assert_array_equal(intensity_profile(interaction, config).values, np.zeros(5))


def test_singular_removal_rows_fall_back_to_fresh_factor():
    # sites 0 and 1 carry identical rows, so any configuration holding both is singular
    j = np.array([[1.0, 1.0, 0.2], [1.0, 1.0, 0.2], [0.2, 0.2, 1.0]])
    interaction = interaction_from_matrix(j, SiteSpace.from_labels(3))
    rows = removal_profiles(interaction, Configuration(3, (0, 1)))
    assert rows[0, 2] == pytest.approx(1.0 - 0.04)
    assert rows[1, 2] == pytest.approx(1.0 - 0.04)


def test_choldate_update_and_downdate():
    gen = np.random.default_rng(3)
    a = gen.standard_normal((4, 4))
    m = a @ a.T + 4.0 * np.eye(4)
    x = gen.standard_normal(4)
    factor = np.linalg.cholesky(m)
    updated = choldate(factor.copy(), x.copy(), +1)
    np.testing.assert_allclose(updated @ updated.T, m + np.outer(x, x), atol=1e-10)
    restored = choldate(updated, x.copy(), -1)
    np.testing.assert_allclose(restored @ restored.T, m, atol=1e-10)


def test_choldate_downdate_loses_definiteness():
    with pytest.raises(np.linalg.LinAlgError):
        choldate(np.eye(2), np.array([2.0, 0.0]), -1)


def test_incremental_cholesky_removal():
    _, _, interaction = random_instance(6, seed=2, lambda_max=0.9)
    chol = IncrementalCholesky.from_indices(interaction.matrix, [4, 0, 3, 1])
    chol.remove(0)
    chol.remove(1)
    chol.append(5)
    assert chol.order == [4, 3, 5]
    assert chol.residual() <= 1e-12


def test_tracker_follows_moves():
    _, _, interaction = random_instance(8, seed=31, lambda_max=0.9)
    tracker = IntensityTracker(interaction, Configuration(8, (1, 4)))
    moves = [("birth", 6), ("birth", 0), ("death", 4), ("hop", (1, 3)), ("death", 6), ("birth", 7), ("hop", (0, 2))]
    for kind, site in moves:
        if kind == "birth":
            tracker.birth(site)
        elif kind == "death":
            tracker.death(site)
        else:
            tracker.hop(*site)
        fresh = intensity_profile(interaction, tracker.configuration).values
        np.testing.assert_allclose(tracker.values, fresh, atol=1e-10)
        np.testing.assert_allclose(tracker.removal(), removal_profiles(interaction, tracker.configuration), atol=1e-10)
    assert tracker.verify() <= 1e-10
    assert tracker.refactorizations == 0


def test_tracker_refactorizes_on_drift():
    _, _, interaction = random_instance(5, seed=6)
    tracker = IntensityTracker(interaction, Configuration(5, (0, 2)))
    tracker.values = tracker.values + 1e-3
    tracker.verify(1e-8)
    assert tracker.refactorizations == 1
    np.testing.assert_allclose(tracker.values, intensity_profile(interaction, tracker.configuration).values)
