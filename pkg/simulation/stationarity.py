from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.stats import chisquare

from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import particle_numbers
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, check_enumerable, exact_distribution, total_variation
from simulation.gillespie import SimConfig, simulate_replicas
from simulation.statistics import final_state_counts, occupancy_from_law, pooled_time_in_state

logger = logging.getLogger(__name__)

TV_TOLERANCE = 0.02
SIGNIFICANCE = 0.01
MIN_EXPECTED = 5.0


@dataclass
class SnapshotResult:
    time: float
    draws: int
    statistic: float
    p_value: float
    bins: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "draws": self.draws,
            "chi2": self.statistic,
            "p_value": self.p_value,
            "bins": self.bins,
        }


@dataclass
class StationarityReport:
    kind: str
    status: str
    tv: Optional[float]
    tv_tolerance: float
    sector_tv: Dict[int, float] = field(default_factory=dict)
    occupancy: List[float] = field(default_factory=list)
    marginals: List[float] = field(default_factory=list)
    snapshot: Optional[SnapshotResult] = None
    significance: float = SIGNIFICANCE

    @property
    def passed(self) -> bool:
        if self.status != "ok":
            return False
        if self.tv is not None and self.tv > self.tv_tolerance:
            return False
        if self.snapshot is not None and self.snapshot.p_value < self.significance:
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "status": self.status,
            "tv": self.tv,
            "tv_tolerance": self.tv_tolerance,
            "sector_tv": {str(m): v for m, v in self.sector_tv.items()},
            "occupancy": list(self.occupancy),
            "marginals": list(self.marginals),
            "snapshot": self.snapshot.to_dict() if self.snapshot else None,
            "passed": self.passed,
        }


def pooled_chisquare(observed: np.ndarray, expected_law: np.ndarray) -> tuple[float, float, int]:
    """Chi-square goodness of fit after pooling all cells with expected count below MIN_EXPECTED."""
    observed = np.asarray(observed, dtype=float)
    expected = expected_law * observed.sum()
    big = expected >= MIN_EXPECTED
    obs = list(observed[big])
    exp = list(expected[big])
    rest_exp = float(expected[~big].sum())
    if rest_exp > 0.0:
        obs.append(float(observed[~big].sum()))
        exp.append(rest_exp)
    if len(obs) < 2:
        return 0.0, 1.0, len(obs)
    exp_arr = np.array(exp)
    # rescale so both sides carry exactly the same total
    exp_arr *= np.sum(obs) / exp_arr.sum()
    stat, p = chisquare(np.array(obs), exp_arr)
    return float(stat), float(p), len(obs)


def sector_distances(empirical: np.ndarray, table: MeasureTable) -> Dict[int, float]:
    """TV between the empirical law and μ(·| |γ| = m) for every sector the empirical law visits."""
    sizes = particle_numbers(table.n_sites)
    out: Dict[int, float] = {}
    for m in range(table.n_sites + 1):
        in_sector = sizes == m
        mass = float(empirical[in_sector].sum())
        if mass <= 0.0:
            continue
        conditioned = np.where(in_sector, empirical, 0.0) / mass
        out[m] = total_variation(conditioned, table.sector_law(m))
    return out


def stationarity_test(
    config: SimConfig,
    interaction: InteractionOperator,
    space: SiteSpace,
    table: MeasureTable | None = None,
    snapshot_time: float | None = 1.0,
    snapshot_draws: int = 500,
    tv_tolerance: float = TV_TOLERANCE,
    significance: float = SIGNIFICANCE,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    scheduler: str = "threads",
) -> StationarityReport:
    """Empirical time-in-state law vs μ (per particle-number sector for Kawasaki), plus a start-from-μ snapshot."""
    n = space.n
    check_enumerable(n, limit)
    if table is None:
        table = exact_distribution(interaction, space, limit)

    trajectories = simulate_replicas(config, interaction, space, scheduler=scheduler)
    if all(t.absorbed for t in trajectories):
        logger.warning("Stationarity test degenerate: all %d replica(s) absorbed", len(trajectories))
        return StationarityReport(kind=config.kind, status="degenerate: absorbed", tv=None, tv_tolerance=tv_tolerance)

    empirical = pooled_time_in_state(trajectories, config.burn_in)
    report = StationarityReport(
        kind=config.kind,
        status="ok",
        tv=None,
        tv_tolerance=tv_tolerance,
        occupancy=occupancy_from_law(empirical, n).tolist(),
        marginals=table.marginals().tolist(),
        significance=significance,
    )
    if config.kind == "glauber":
        report.tv = total_variation(empirical, table.probabilities)
    else:
        report.sector_tv = sector_distances(empirical, table)
        report.tv = max(report.sector_tv.values()) if report.sector_tv else None

    if snapshot_time is not None and snapshot_time > 0.0 and snapshot_draws > 0:
        snap_cfg = config.with_overrides(horizon=float(snapshot_time), initial="dpp_sample", replicas=snapshot_draws)
        # snapshot replicas use stream indices after the main replicas
        ids = range(config.replicas, config.replicas + snapshot_draws)
        snaps = simulate_replicas(snap_cfg, interaction, space, scheduler=scheduler, replica_ids=ids)
        stat, p, bins = pooled_chisquare(final_state_counts(snaps), table.probabilities)
        report.snapshot = SnapshotResult(float(snapshot_time), snapshot_draws, stat, p, bins)

    logger.info(
        "Stationarity (%s): TV %s, snapshot p=%s -> %s",
        config.kind,
        f"{report.tv:.4f}" if report.tv is not None else "n/a",
        f"{report.snapshot.p_value:.4f}" if report.snapshot else "n/a",
        "pass" if report.passed else "fail",
    )
    return report
