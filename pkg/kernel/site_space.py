from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


def _frozen(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SiteSpace:
    """Finite ordered set of sites carrying positive quadrature weights.

    Integrals against the reference measure become weighted sums over sites.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        positions = _frozen(self.positions)
        weights = _frozen(self.weights)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)
        if positions.ndim != 1 or positions.size < 1:
            raise ValueError("Site space needs at least one site")
        if weights.shape != positions.shape:
            raise ValueError(f"Got {weights.size} weights for {positions.size} sites")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise ValueError("All site weights must be strictly positive")
        if np.unique(positions).size != positions.size:
            raise ValueError("Site positions must be pairwise distinct")

    @property
    def n(self) -> int:
        return int(self.positions.size)

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def differences(self) -> np.ndarray:
        return self.positions[:, None] - self.positions[None, :]

    @classmethod
    def from_labels(cls, n: int, weights: Sequence[float] | None = None) -> "SiteSpace":
        """Abstract sites 0..n-1; unit weights unless given."""
        if n < 1:
            raise ValueError(f"Number of sites must be >= 1, got {n}")
        w = np.ones(n) if weights is None else weights
        return cls(np.arange(n, dtype=float), w)


def make_grid_space(interval: Tuple[float, float] | Sequence[float], n: int, weight_rule: str = "uniform") -> SiteSpace:
    """n equispaced cell midpoints on [lo, hi], each carrying weight (hi - lo) / n."""
    if len(interval) != 2:
        raise ValueError(f"Interval must be [lo, hi], got {interval!r}")
    lo, hi = float(interval[0]), float(interval[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ValueError(f"Degenerate interval [{lo}, {hi}]")
    if int(n) != n or n < 1:
        raise ValueError(f"Number of sites must be a positive integer, got {n}")
    n = int(n)
    h = (hi - lo) / n
    positions = lo + (np.arange(n) + 0.5) * h
    if weight_rule not in {"uniform", "midpoint"}:
        raise ValueError(f"Unknown weight rule: {weight_rule}")
    # the midpoint rule on an equispaced grid gives the same cell weights
    weights = np.full(n, h)
    return SiteSpace(positions, weights)
