from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import pandas as pd
from statsmodels.tsa.stattools import acf

from measure.configuration import occupancy_matrix
from measure.dpp import check_enumerable
from simulation.gillespie import Trajectory

MIN_WINDOW = 1e-6
GRID_POINTS = 4096
SOKAL_WINDOW = 5.0
# time-in-state vectors have 2^n entries
STATE_TABLE_LIMIT = 20


def _window(traj: Trajectory, burn_in: float, min_window: float) -> tuple[float, float]:
    if not 0.0 <= burn_in < 1.0:
        raise ValueError(f"burn_in must lie in [0, 1), got {burn_in}")
    start = burn_in * traj.horizon
    if traj.horizon - start < min_window:
        raise ValueError(
            f"Empty averaging window: [{start:.6g}, {traj.horizon:.6g}] is shorter than {min_window:.1e}"
        )
    return start, traj.horizon


def integrated_autocorrelation_time(series: np.ndarray, window: float = SOKAL_WINDOW) -> float:
    """τ = 1 + 2 Σ_{k≤M} ρ_k, with M the first lag where M >= window·τ(M)."""
    x = np.asarray(series, dtype=float)
    if x.size < 3 or np.var(x) == 0.0:
        return 1.0
    rho = acf(x, nlags=x.size - 1, fft=True)
    tau = 1.0
    for m in range(1, rho.size):
        tau += 2.0 * rho[m]
        if m >= window * tau:
            break
    return max(tau, 1.0)


def sample_on_grid(traj: Trajectory, start: float, end: float, points: int = GRID_POINTS) -> np.ndarray:
    """Occupancy indicators at cell midpoints of a regular grid on [start, end], shape (points, n)."""
    entries, _, masks = traj.segments()
    grid = start + (np.arange(points) + 0.5) * (end - start) / points
    which = np.searchsorted(entries, grid, side="right") - 1
    bits = (masks[which][:, None] >> np.arange(traj.n_sites)) & 1
    return bits.astype(float)


@dataclass
class OccupancyStats:
    """Per-site time-averaged occupancy over the window [start, end]."""

    mean: np.ndarray
    stderr: np.ndarray
    tau: np.ndarray
    window: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "site": np.arange(self.mean.size),
                "mean": self.mean,
                "stderr": self.stderr,
                "tau": self.tau,
            }
        )


def occupancy_stats(
    traj: Trajectory,
    burn_in: float = 0.1,
    min_window: float = MIN_WINDOW,
    grid_points: int = GRID_POINTS,
) -> OccupancyStats:
    """Time-weighted occupancy; standard errors from the integrated autocorrelation time of the gridded path."""
    start, end = _window(traj, burn_in, min_window)
    lo, durations, masks = traj.segments(start, end)
    bits = (masks[:, None] >> np.arange(traj.n_sites)) & 1
    mean = (durations @ bits) / (end - start)

    grid = sample_on_grid(traj, start, end, grid_points)
    tau = np.array([integrated_autocorrelation_time(grid[:, i]) for i in range(traj.n_sites)])
    var = grid.var(axis=0)
    stderr = np.sqrt(var * tau / grid_points)
    return OccupancyStats(mean=mean, stderr=stderr, tau=tau, window=end - start)


def merge_occupancy(stats: Sequence[OccupancyStats]) -> OccupancyStats:
    """Fold replica statistics: window-weighted mean, independent-replica standard error."""
    if not stats:
        raise ValueError("Nothing to merge")
    windows = np.array([s.window for s in stats])
    weights = windows / windows.sum()
    mean = sum(w * s.mean for w, s in zip(weights, stats))
    stderr = np.sqrt(sum((w * s.stderr) ** 2 for w, s in zip(weights, stats)))
    tau = np.mean([s.tau for s in stats], axis=0)
    return OccupancyStats(mean=mean, stderr=stderr, tau=tau, window=float(windows.sum()))


def time_in_state(traj: Trajectory, burn_in: float = 0.1, min_window: float = MIN_WINDOW) -> np.ndarray:
    """Fraction of the window spent in each configuration, indexed by bitmask."""
    check_enumerable(traj.n_sites, STATE_TABLE_LIMIT)
    start, end = _window(traj, burn_in, min_window)
    _, durations, masks = traj.segments(start, end)
    law = np.bincount(masks, weights=durations, minlength=1 << traj.n_sites)
    return law / (end - start)


def pooled_time_in_state(trajectories: Sequence[Trajectory], burn_in: float = 0.1) -> np.ndarray:
    laws: List[np.ndarray] = [time_in_state(t, burn_in) for t in trajectories]
    return np.mean(laws, axis=0)


def final_state_counts(trajectories: Sequence[Trajectory]) -> np.ndarray:
    n = trajectories[0].n_sites
    check_enumerable(n, STATE_TABLE_LIMIT)
    masks = np.array([t.final.bitmask for t in trajectories], dtype=np.int64)
    return np.bincount(masks, minlength=1 << n)


def occupancy_from_law(law: np.ndarray, n_sites: int) -> np.ndarray:
    return law @ occupancy_matrix(n_sites)


def occupancy_z_scores(stats: OccupancyStats, marginals: np.ndarray) -> np.ndarray:
    """(mean - exact marginal) / stderr per site; 0 where the standard error vanishes."""
    marginals = np.asarray(marginals, dtype=float)
    if marginals.shape != stats.mean.shape:
        raise ValueError(f"Need {stats.mean.shape[0]} marginals, got {marginals.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(stats.stderr > 0, (stats.mean - marginals) / stats.stderr, 0.0)


def particle_number_conserved(trajectories: Sequence[Trajectory]) -> bool:
    return all(np.unique(t.particle_counts()).size == 1 for t in trajectories)
