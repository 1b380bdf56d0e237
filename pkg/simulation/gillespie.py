from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import dask
import numpy as np
import pandas as pd

from dynamics.rates import RateFamily, tracker_event_rates
from intensity.papangelou import DRIFT_TOLERANCE, IntensityTracker
from kernel.interaction import InteractionOperator, correlation_kernel
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.sampler import SpectralSampler, replica_rng
from utils.errors import NumericalAbort
from utils.validators import validate_unit_interval

logger = logging.getLogger(__name__)

EVENT_KINDS = ("birth", "death", "hop")
INITIAL_RULES = ("dpp_sample", "empty", "given")
CHECK_INTERVAL = 1000


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    sites: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"Unknown event kind '{self.kind}'")
        expected = 2 if self.kind == "hop" else 1
        if len(self.sites) != expected:
            raise ValueError(f"{self.kind} event needs {expected} site(s), got {self.sites}")

    def apply(self, state: Configuration) -> Configuration:
        if self.kind == "birth":
            return state.add(self.sites[0])
        if self.kind == "death":
            return state.remove(self.sites[0])
        return state.move(self.sites[0], self.sites[1])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Event log of one replica on [0, horizon].

    ``absorbed_at`` is the time the chain reached a state with zero exit rate,
    after which the state is constant up to the horizon.
    """

    initial: Configuration
    events: Tuple[Event, ...]
    horizon: float
    absorbed_at: Optional[float] = None
    replica: int = 0
    refactorizations: int = 0

    def __post_init__(self) -> None:
        times = np.array([e.time for e in self.events], dtype=float)
        if times.size:
            if times[0] <= 0.0 or np.any(np.diff(times) <= 0.0):
                raise ValueError("Event times must be positive and strictly increasing")
            if times[-1] > self.horizon:
                raise ValueError(f"Event at t={times[-1]} beyond horizon {self.horizon}")
        # replay raises on any birth into an occupied site or death of a vacant one
        for _ in self.states():
            pass

    @property
    def absorbed(self) -> bool:
        return self.absorbed_at is not None

    @property
    def n_sites(self) -> int:
        return self.initial.n_sites

    def states(self) -> Iterator[Tuple[float, Configuration]]:
        """(entry time, configuration) for the initial state and after every event."""
        state = self.initial
        yield 0.0, state
        for e in self.events:
            state = e.apply(state)
            yield e.time, state

    def replay(self) -> List[Configuration]:
        return [c for _, c in self.states()]

    @property
    def final(self) -> Configuration:
        state = self.initial
        for e in self.events:
            state = e.apply(state)
        return state

    def segments(self, start: float = 0.0, end: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(entry times, durations, bitmasks) of the piecewise-constant path clipped to [start, end]."""
        end = self.horizon if end is None else end
        entries = []
        masks = []
        for t, c in self.states():
            entries.append(t)
            masks.append(c.bitmask)
        entries_arr = np.array(entries, dtype=float)
        exits = np.append(entries_arr[1:], self.horizon)
        lo = np.clip(entries_arr, start, end)
        hi = np.clip(exits, start, end)
        return lo, hi - lo, np.array(masks, dtype=np.int64)

    def particle_counts(self) -> np.ndarray:
        return np.array([c.size for c in self.replay()], dtype=int)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        state = self.initial
        for e in self.events:
            state = e.apply(state)
            rows.append(
                {
                    "time": e.time,
                    "event": e.kind,
                    "site": e.sites[0],
                    "target": e.sites[1] if e.kind == "hop" else pd.NA,
                    "bitmask": state.bitmask,
                }
            )
        frame = pd.DataFrame(rows, columns=["time", "event", "site", "target", "bitmask"])
        frame["target"] = frame["target"].astype("Int64")
        return frame


@dataclass(frozen=True, eq=False)
class SimConfig:
    family: RateFamily
    horizon: float
    burn_in: float = 0.1
    replicas: int = 1
    seed: int = 0
    initial: str = "dpp_sample"
    initial_sites: Tuple[int, ...] = field(default_factory=tuple)
    check_interval: int = CHECK_INTERVAL
    drift_tolerance: float = DRIFT_TOLERANCE

    def __post_init__(self) -> None:
        if not np.isfinite(self.horizon) or self.horizon < 0.0:
            raise ValueError(f"Time horizon must be finite and nonnegative, got {self.horizon}")
        ok, errs = validate_unit_interval(self.burn_in, "burn_in", closed_right=False)
        if not ok:
            raise ValueError("; ".join(errs))
        if self.replicas < 1:
            raise ValueError(f"Replica count must be >= 1, got {self.replicas}")
        if self.initial not in INITIAL_RULES:
            raise ValueError(f"Unknown initial rule '{self.initial}'. Expected one of {', '.join(INITIAL_RULES)}")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")

    @property
    def kind(self) -> str:
        return self.family.kind

    def with_overrides(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class StepResult:
    holding_time: float
    event: Optional[Event]
    state: Configuration

    @property
    def absorbed(self) -> bool:
        return self.event is None


def _select(rates: np.ndarray, u: float) -> int:
    cumulative = np.cumsum(rates)
    idx = int(np.searchsorted(cumulative, u * cumulative[-1], side="right"))
    return min(idx, rates.size - 1)


def step(
    state: Configuration,
    interaction: InteractionOperator,
    space: SiteSpace,
    family: RateFamily,
    rng: np.random.Generator,
    tracker: IntensityTracker | None = None,
    now: float = 0.0,
) -> StepResult:
    """One Gillespie step: Exp(R) holding time, then one uniform picks the event by its rate share.

    Event order is deaths then births in site order (Glauber) or hops in
    (source, target) site order (Kawasaki). The tracker, when given, is advanced.
    """
    if tracker is None:
        tracker = IntensityTracker(interaction, state, family.threshold)
    elif tracker.configuration != state:
        raise ValueError("Tracker is not positioned at the given state")

    if family.kind == "glauber":
        deaths, births = tracker_event_rates(tracker, family, space.weights)
        rates = np.concatenate([deaths, births])
    else:
        rates = tracker_event_rates(tracker, family, space.weights).ravel()

    total = float(rates.sum()) if rates.size else 0.0
    if total <= 0.0:
        return StepResult(np.inf, None, state)

    holding = float(rng.exponential(1.0 / total))
    idx = _select(rates, float(rng.random()))
    occ = state.occupied
    vac = state.vacant()
    when = now + holding
    if family.kind == "glauber":
        if idx < len(occ):
            event = Event(when, "death", (occ[idx],))
            tracker.death(occ[idx])
        else:
            site = vac[idx - len(occ)]
            event = Event(when, "birth", (site,))
            tracker.birth(site)
    else:
        source, target = occ[idx // len(vac)], vac[idx % len(vac)]
        event = Event(when, "hop", (source, target))
        tracker.hop(source, target)
    return StepResult(holding, event, tracker.configuration)


def initial_state(config: SimConfig, interaction: InteractionOperator, rng: np.random.Generator) -> Configuration:
    n = interaction.n
    if config.initial == "empty":
        return Configuration.empty(n)
    if config.initial == "given":
        return Configuration(n, tuple(config.initial_sites))
    return SpectralSampler(correlation_kernel(interaction)).sample(rng)


def simulate(config: SimConfig, interaction: InteractionOperator, space: SiteSpace, replica: int = 0) -> Trajectory:
    """One replica; bit-identical for a fixed (seed, replica)."""
    rng = replica_rng(config.seed, replica)
    start = initial_state(config, interaction, rng)
    tracker = IntensityTracker(interaction, start, config.family.threshold)
    state = start
    events: List[Event] = []
    absorbed_at: Optional[float] = None
    t = 0.0
    while t < config.horizon:
        try:
            result = step(state, interaction, space, config.family, rng, tracker, now=t)
        except NumericalAbort:
            logger.error("Replica %d aborted at t=%.6g in state %s after %d events", replica, t, state.occupied, len(events))
            raise
        if result.absorbed:
            absorbed_at = t
            logger.info("Replica %d absorbed at t=%.6g in state %s", replica, t, state.occupied)
            break
        if result.event.time > config.horizon:
            break
        events.append(result.event)
        state = result.state
        t = result.event.time
        if len(events) % config.check_interval == 0:
            tracker.verify(config.drift_tolerance)
    logger.debug("Replica %d: %d events on [0, %.6g]", replica, len(events), config.horizon)
    return Trajectory(
        initial=start,
        events=tuple(events),
        horizon=config.horizon,
        absorbed_at=absorbed_at,
        replica=replica,
        refactorizations=tracker.refactorizations,
    )


def simulate_replicas(
    config: SimConfig,
    interaction: InteractionOperator,
    space: SiteSpace,
    scheduler: str = "threads",
    replica_ids: Sequence[int] | None = None,
) -> List[Trajectory]:
    """All replicas as independent dask tasks, returned in replica order."""
    ids = list(range(config.replicas)) if replica_ids is None else list(replica_ids)
    tasks = [dask.delayed(simulate)(config, interaction, space, r) for r in ids]
    trajectories = list(dask.compute(*tasks, scheduler=scheduler))
    logger.info(
        "Simulated %d %s replica(s) to T=%.6g (%d events total)",
        len(trajectories),
        config.kind,
        config.horizon,
        sum(len(t.events) for t in trajectories),
    )
    return trajectories
