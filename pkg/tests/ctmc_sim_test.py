import numpy as np
import pandas as pd
import pytest

from conftest import diagonal_instance, random_instance
from dynamics.rates import RateFamily, all_pairs_mobility
from intensity.papangelou import IntensityTracker
from measure.configuration import Configuration
from measure.dpp import exact_distribution
from simulation.gillespie import Event, SimConfig, Trajectory, simulate, simulate_replicas, step
from simulation.stationarity import pooled_chisquare, sector_distances, stationarity_test
from simulation.statistics import (
    OccupancyStats,
    merge_occupancy,
    occupancy_stats,
    occupancy_z_scores,
    particle_number_conserved,
    pooled_time_in_state,
    time_in_state,
)


def _glauber(horizon, s=1.0, scale=1.0, **kwargs):
    return SimConfig(RateFamily("glauber", s=s, scale=scale), horizon, **kwargs)


def test_same_seed_same_trajectory():
    space, _, interaction = random_instance(4, seed=9)
    config = _glauber(50.0, seed=123)
    a = simulate(config, interaction, space, replica=2)
    b = simulate(config, interaction, space, replica=2)
    pd.testing.assert_frame_equal(a.to_frame(), b.to_frame())
    assert a.initial == b.initial


def test_replicas_use_independent_streams():
    space, _, interaction = random_instance(4, seed=9)
    config = _glauber(50.0, seed=123)
    a = simulate(config, interaction, space, replica=0)
    b = simulate(config, interaction, space, replica=1)
    assert [e.time for e in a.events[:5]] != [e.time for e in b.events[:5]]


def test_zero_horizon_has_no_events():
    space, _, interaction = random_instance(3, seed=1)
    traj = simulate(_glauber(0.0), interaction, space)
    assert traj.events == ()
    assert not traj.absorbed


def test_zero_rates_absorb_immediately():
    space, _, interaction = random_instance(3, seed=1)
    config = _glauber(10.0, scale=0.0, initial="given", initial_sites=(0, 2))
    traj = simulate(config, interaction, space)
    assert traj.events == ()
    assert traj.absorbed_at == 0.0
    assert traj.final == Configuration(3, (0, 2))


def test_full_configuration_absorbs_kawasaki():
    space, _, interaction = random_instance(3, seed=1)
    family = RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(3))
    traj = simulate(SimConfig(family, 10.0, initial="given", initial_sites=(0, 1, 2)), interaction, space)
    assert traj.absorbed
    assert traj.events == ()


def test_single_site_alternates():
    space, _, interaction = diagonal_instance([0.5])
    traj = simulate(_glauber(20.0, initial="empty", seed=4), interaction, space)
    kinds = [e.kind for e in traj.events]
    assert kinds
    assert kinds[0] == "birth"
    assert all(a != b for a, b in zip(kinds, kinds[1:]))


def test_kawasaki_conserves_particle_number():
    space, _, interaction = random_instance(5, seed=2)
    family = RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5))
    config = SimConfig(family, 30.0, initial="given", initial_sites=(1, 3), seed=8)
    traj = simulate(config, interaction, space)
    assert len(traj.events) > 0
    assert set(traj.particle_counts().tolist()) == {2}
    assert all(e.kind == "hop" for e in traj.events)


def test_event_times_increase_and_stay_in_horizon():
    space, _, interaction = random_instance(4, seed=3)
    traj = simulate(_glauber(25.0, seed=6), interaction, space)
    times = np.array([e.time for e in traj.events])
    assert np.all(np.diff(times) > 0)
    assert times[-1] <= 25.0


def test_step_from_empty_is_a_birth():
    space, _, interaction = diagonal_instance([0.4, 0.6])
    result = step(Configuration.empty(2), interaction, space, RateFamily("glauber"), np.random.default_rng(0))
    assert result.event.kind == "birth"
    assert result.holding_time > 0.0
    assert result.state.size == 1


def test_step_rejects_stale_tracker():
    space, _, interaction = diagonal_instance([0.4, 0.6])
    tracker = IntensityTracker(interaction, Configuration(2, (0,)))
    with pytest.raises(ValueError):
        step(Configuration.empty(2), interaction, space, RateFamily("glauber"), np.random.default_rng(0), tracker)


def test_trajectory_validation():
    start = Configuration(2, (0,))
    with pytest.raises(ValueError):
        Trajectory(start, (Event(1.0, "birth", (0,)),), 5.0)
    with pytest.raises(ValueError):
        Trajectory(start, (Event(2.0, "death", (0,)), Event(1.0, "birth", (0,))), 5.0)
    with pytest.raises(ValueError):
        Event(1.0, "hop", (0,))


def test_sim_config_validation():
    family = RateFamily("glauber")
    with pytest.raises(ValueError):
        SimConfig(family, -1.0)
    with pytest.raises(ValueError):
        SimConfig(family, 1.0, burn_in=1.0)
    with pytest.raises(ValueError):
        SimConfig(family, 1.0, initial="random")


def test_trajectory_frame():
    start = Configuration(3, (0,))
    traj = Trajectory(start, (Event(0.5, "birth", (2,)), Event(1.5, "hop", (0, 1))), 2.0)
    frame = traj.to_frame()
    assert list(frame.columns) == ["time", "event", "site", "target", "bitmask"]
    assert frame["bitmask"].tolist() == [0b101, 0b110]
    assert pd.isna(frame["target"].iloc[0])
    assert frame["target"].iloc[1] == 1


def test_constant_trajectory_occupancy():
    traj = Trajectory(Configuration(2, (0,)), (), 10.0)
    stats = occupancy_stats(traj, burn_in=0.1)
    np.testing.assert_allclose(stats.mean, [1.0, 0.0])
    np.testing.assert_allclose(stats.stderr, [0.0, 0.0])
    assert stats.window == pytest.approx(9.0)


def test_piecewise_occupancy_is_time_weighted():
    traj = Trajectory(Configuration.empty(1), (Event(3.0, "birth", (0,)),), 4.0)
    stats = occupancy_stats(traj, burn_in=0.0)
    assert stats.mean[0] == pytest.approx(0.25)
    law = time_in_state(traj, burn_in=0.0)
    np.testing.assert_allclose(law, [0.75, 0.25])


def test_empty_window_rejected():
    traj = Trajectory(Configuration.empty(2), (), 1e-5)
    with pytest.raises(ValueError):
        occupancy_stats(traj, burn_in=0.99)


def test_merge_occupancy():
    a = occupancy_stats(Trajectory(Configuration(1, (0,)), (), 4.0), burn_in=0.0)
    b = occupancy_stats(Trajectory(Configuration.empty(1), (), 4.0), burn_in=0.0)
    merged = merge_occupancy([a, b])
    assert merged.mean[0] == pytest.approx(0.5)
    assert merged.window == pytest.approx(8.0)
    with pytest.raises(ValueError):
        merge_occupancy([])


def test_occupancy_z_scores():
    stats = OccupancyStats(np.array([0.5, 0.2, 0.3]), np.array([0.1, 0.0, 0.05]), np.ones(3), 1.0)
    np.testing.assert_allclose(occupancy_z_scores(stats, [0.3, 0.9, 0.3]), [2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        occupancy_z_scores(stats, [0.5, 0.5])


def test_particle_number_conservation_flag():
    hopping = Trajectory(Configuration(3, (0,)), (Event(1.0, "hop", (0, 2)),), 2.0)
    growing = Trajectory(Configuration(3, (0,)), (Event(1.0, "birth", (1,)),), 2.0)
    assert particle_number_conserved([hopping])
    assert not particle_number_conserved([hopping, growing])


def test_single_site_occupancy_converges():
    space, _, interaction = diagonal_instance([0.5])
    traj = simulate(_glauber(2000.0, seed=31), interaction, space)
    stats = occupancy_stats(traj, burn_in=0.1)
    assert abs(stats.mean[0] - 0.5) <= 0.05
    assert 0.0 < stats.stderr[0] < 0.05


def test_drift_checks_do_not_refactorize_stable_runs():
    space, _, interaction = random_instance(5, seed=5)
    config = _glauber(40.0, seed=2, check_interval=5)
    traj = simulate(config, interaction, space)
    assert traj.refactorizations == 0


def test_replicas_come_back_in_order():
    space, _, interaction = random_instance(3, seed=4)
    config = _glauber(20.0, seed=77, replicas=3)
    trajectories = simulate_replicas(config, interaction, space, scheduler="synchronous")
    assert [t.replica for t in trajectories] == [0, 1, 2]
    single = simulate(config, interaction, space, replica=1)
    pd.testing.assert_frame_equal(trajectories[1].to_frame(), single.to_frame())


def test_pooled_time_in_state_is_a_law():
    space, _, interaction = random_instance(3, seed=4)
    trajectories = simulate_replicas(_glauber(20.0, replicas=2), interaction, space, scheduler="synchronous")
    law = pooled_time_in_state(trajectories, burn_in=0.1)
    assert law.sum() == pytest.approx(1.0)


def test_pooled_chisquare_perfect_fit():
    stat, p, bins = pooled_chisquare(np.array([25, 25, 50]), np.array([0.25, 0.25, 0.5]))
    assert stat == pytest.approx(0.0)
    assert p == pytest.approx(1.0)
    assert bins == 3


def test_pooled_chisquare_merges_sparse_cells():
    _, _, bins = pooled_chisquare(np.array([50, 46, 2, 2]), np.array([0.5, 0.46, 0.02, 0.02]))
    assert bins == 3


def test_sector_distances_of_exact_law():
    space, _, interaction = random_instance(4, seed=6)
    table = exact_distribution(interaction, space)
    distances = sector_distances(table.probabilities, table)
    assert set(distances) == {0, 1, 2, 3, 4}
    assert max(distances.values()) <= 1e-12


def test_stationarity_degenerate_when_all_absorbed():
    space, _, interaction = random_instance(3, seed=1)
    config = _glauber(10.0, scale=0.0, replicas=2)
    report = stationarity_test(config, interaction, space, snapshot_time=None, scheduler="synchronous")
    assert report.status == "degenerate: absorbed"
    assert not report.passed
    assert report.to_dict()["tv"] is None


def test_stationarity_small_glauber():
    space, _, interaction = diagonal_instance([0.4, 0.7])
    config = _glauber(3000.0, seed=5, replicas=2)
    report = stationarity_test(config, interaction, space, snapshot_time=None, tv_tolerance=0.05, scheduler="synchronous")
    assert report.status == "ok"
    assert report.tv <= 0.05
    assert report.passed
