from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration, indices_of, occupancy_matrix, particle_numbers
from utils.errors import EnumerationLimitError
from utils.validators import validate_probability_vector

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_LIMIT = 14


def _principal_det(matrix: np.ndarray, idx: list[int]) -> float:
    # empty minor has determinant 1
    if not idx:
        return 1.0
    return float(np.linalg.det(matrix[np.ix_(idx, idx)]))


def config_probability(interaction: InteractionOperator, space: SiteSpace, configuration: Configuration) -> float:
    """det(L_γ) / det(I + L) with L = D^{1/2} J D^{1/2}."""
    l_sym = interaction.symmetrized()
    numerator = max(_principal_det(l_sym, list(configuration.occupied)), 0.0)
    return numerator / float(np.prod(1.0 + interaction.eigenvalues))


@dataclass(eq=False)
class MeasureTable:
    """Probability of every subset of sites, indexed by bitmask."""

    n_sites: int
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probabilities, dtype=float)
        if p.shape != (1 << self.n_sites,):
            raise ValueError(f"Expected {1 << self.n_sites} probabilities, got shape {p.shape}")
        ok, errs = validate_probability_vector(p)
        if not ok:
            raise ValueError("; ".join(errs))
        p.setflags(write=False)
        self.probabilities = p

    def __getitem__(self, configuration: Configuration) -> float:
        return float(self.probabilities[configuration.bitmask])

    def __len__(self) -> int:
        return int(self.probabilities.size)

    @property
    def normalization_error(self) -> float:
        return abs(float(self.probabilities.sum()) - 1.0)

    def marginals(self) -> np.ndarray:
        """P(i in γ) for every site i."""
        return self.probabilities @ occupancy_matrix(self.n_sites)

    def pair_marginals(self) -> np.ndarray:
        occ = occupancy_matrix(self.n_sites).astype(float)
        return (occ * self.probabilities[:, None]).T @ occ

    def sector_probabilities(self) -> np.ndarray:
        return np.bincount(particle_numbers(self.n_sites), weights=self.probabilities, minlength=self.n_sites + 1)

    def sector_law(self, m: int) -> np.ndarray:
        """μ(·| |γ| = m) as a vector over all bitmasks (zero outside the sector)."""
        in_sector = particle_numbers(self.n_sites) == m
        mass = float(self.probabilities[in_sector].sum())
        if mass <= 0.0:
            raise ValueError(f"Sector with {m} particles has zero probability")
        law = np.where(in_sector, self.probabilities, 0.0)
        return law / mass

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bitmask": np.arange(self.probabilities.size, dtype=np.int64),
                "size": particle_numbers(self.n_sites),
                "probability": self.probabilities,
            }
        )


def check_enumerable(n_sites: int, limit: int = DEFAULT_ENUMERATION_LIMIT) -> None:
    if n_sites > limit:
        raise EnumerationLimitError(f"{n_sites} sites exceed the enumeration limit of {limit} ({1 << n_sites} states)")


def exact_distribution(interaction: InteractionOperator, space: SiteSpace, limit: int = DEFAULT_ENUMERATION_LIMIT) -> MeasureTable:
    n = space.n
    check_enumerable(n, limit)
    l_sym = interaction.symmetrized()
    norm = float(np.prod(1.0 + interaction.eigenvalues))
    dets = np.empty(1 << n)
    for mask in range(1 << n):
        dets[mask] = _principal_det(l_sym, indices_of(mask, n))
    probs = np.clip(dets, 0.0, None) / norm
    table = MeasureTable(n, probs)
    logger.debug("Enumerated %d configurations; normalization error %.3e", probs.size, table.normalization_error)
    return table


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def empirical_law(draws: np.ndarray, limit: int = DEFAULT_ENUMERATION_LIMIT) -> np.ndarray:
    """Subset frequencies of occupancy draws (one row per draw), indexed by bitmask."""
    draws = np.asarray(draws, dtype=bool)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValueError("Need a non-empty (draws, sites) occupancy array")
    n = draws.shape[1]
    check_enumerable(n, limit)
    masks = (draws.astype(np.int64) << np.arange(n)).sum(axis=1)
    return np.bincount(masks, minlength=1 << n) / draws.shape[0]
