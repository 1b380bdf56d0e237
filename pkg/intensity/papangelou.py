from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from intensity.factorization import PIVOT_TOLERANCE, IncrementalCholesky
from kernel.interaction import InteractionOperator
from measure.configuration import Configuration, indices_of
from utils.errors import PSDLossError

logger = logging.getLogger(__name__)

ZERO_THRESHOLD = 1e-12
NEGATIVE_TOLERANCE = 1e-10
BOUND_TOLERANCE = 1e-9
BREAKDOWN_TOLERANCE = 1e-8
DRIFT_TOLERANCE = 1e-8


def clamp_intensity(values: np.ndarray, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """Zero out everything below the threshold; fail on clearly negative values."""
    values = np.asarray(values, dtype=float)
    worst = float(values.min()) if values.size else 0.0
    if worst < -BREAKDOWN_TOLERANCE:
        raise PSDLossError(f"Negative conditional intensity {worst:.3e}: J lost positive semidefiniteness")
    return np.where(values > threshold, values, 0.0)


@dataclass(frozen=True, eq=False)
class IntensityProfile:
    """Per-site intensities for one configuration.

    ``values[x]`` is r(x, γ) for vacant x and r(x, γ∖x) for occupied x.
    """

    configuration: Configuration
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.configuration.n_sites,):
            raise ValueError(f"Profile needs {self.configuration.n_sites} values, got {v.shape}")
        if np.any(v < -NEGATIVE_TOLERANCE):
            raise ValueError("Intensity profile has negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, site: int) -> float:
        return float(self.values[site])


def _profile_from_factor(matrix: np.ndarray, chol: IncrementalCholesky, threshold: float) -> np.ndarray:
    n = matrix.shape[0]
    if chol.singular:
        # det J_γ = 0 makes every ratio with J_γ in the numerator or denominator vanish
        return np.zeros(n)
    diag = np.diag(matrix).copy()
    if not chol.order:
        return clamp_intensity(diag, threshold)
    idx = chol.order
    w = solve_triangular(chol.factor, matrix[idx, :], lower=True)
    values = diag - np.sum(w * w, axis=0)
    inv_diag = np.sum(chol.inverse_factor() ** 2, axis=0)
    values[idx] = 1.0 / inv_diag
    return clamp_intensity(values, threshold)


def _removal_from_factor(matrix: np.ndarray, chol: IncrementalCholesky, profile: np.ndarray, threshold: float) -> np.ndarray:
    n = matrix.shape[0]
    m = chol.size
    if m == 0:
        return np.zeros((0, n))
    idx = chol.order
    if chol.singular:
        # J_{γ∖x} may still be invertible; refactor each row from scratch
        rows = np.zeros((m, n))
        for k, x in enumerate(idx):
            rest = IncrementalCholesky.from_indices(matrix, [i for i in idx if i != x], chol.pivot_tolerance)
            rows[k] = _profile_from_factor(matrix, rest, threshold)
        rows[:, idx] = 0.0
        return rows
    linv = chol.inverse_factor()
    inv_diag = np.sum(linv**2, axis=0)
    # rows of B are (J_γ^{-1} J_{γ,:}) in factor order
    b = linv.T @ (linv @ matrix[idx, :])
    removed = profile[None, :] + b**2 / inv_diag[:, None]
    removed[:, idx] = 0.0
    return clamp_intensity(removed, threshold)


def intensity(interaction: InteractionOperator, configuration: Configuration, site: int, threshold: float = ZERO_THRESHOLD) -> float:
    """r(x, γ) = det J_{γ∪x} / det J_γ as the Schur complement J_xx - J_{x,γ} J_γ^{-1} J_{γ,x}."""
    if site in configuration:
        raise ValueError(f"Site {site} is occupied; r(x, γ) needs x outside γ")
    j = interaction.matrix
    chol = IncrementalCholesky.from_indices(j, configuration.occupied)
    if chol.singular:
        return 0.0
    if chol.size:
        l = solve_triangular(chol.factor, j[chol.order, site], lower=True)
        value = j[site, site] - float(l @ l)
    else:
        value = float(j[site, site])
    return float(clamp_intensity(np.array([value]), threshold)[0])


def naive_intensity(interaction: InteractionOperator, configuration: Configuration, site: int) -> float:
    """Determinant ratio computed directly; reference for the factorized routines."""
    j = interaction.matrix
    idx = list(configuration.occupied)
    den = float(np.linalg.det(j[np.ix_(idx, idx)])) if idx else 1.0
    if den <= 0.0:
        return 0.0
    grown = idx + [site]
    return float(np.linalg.det(j[np.ix_(grown, grown)])) / den


def intensity_profile(interaction: InteractionOperator, configuration: Configuration, threshold: float = ZERO_THRESHOLD) -> IntensityProfile:
    chol = IncrementalCholesky.from_indices(interaction.matrix, configuration.occupied)
    return IntensityProfile(configuration, _profile_from_factor(interaction.matrix, chol, threshold))


def removal_profiles(interaction: InteractionOperator, configuration: Configuration, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """Row k holds r(y, γ∖x_k) for the k-th occupied site x_k (sorted order) and vacant y.

    Uses r(y, γ∖x) = r(y, γ) + ((J_γ^{-1} J_{γ,y})_x)^2 / (J_γ^{-1})_xx.
    """
    chol = IncrementalCholesky.from_indices(interaction.matrix, configuration.occupied)
    profile = _profile_from_factor(interaction.matrix, chol, threshold)
    return _removal_from_factor(interaction.matrix, chol, profile, threshold)


def bound_check(interaction: InteractionOperator, configuration: Configuration) -> float:
    """max_x r(x, ·) - J(x, x); non-positive up to rounding when the bound r <= J(x,x) holds."""
    profile = intensity_profile(interaction, configuration)
    return float(np.max(profile.values - interaction.diagonal()))


def intensity_table(interaction: InteractionOperator, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """Profiles of all 2^n configurations, row = bitmask."""
    n = interaction.n
    table = np.empty((1 << n, n))
    for mask in range(1 << n):
        chol = IncrementalCholesky.from_indices(interaction.matrix, indices_of(mask, n))
        table[mask] = _profile_from_factor(interaction.matrix, chol, threshold)
    return table


def intensity_frame(interaction: InteractionOperator, threshold: float = ZERO_THRESHOLD) -> pd.DataFrame:
    """intensity_table as one row per configuration: bitmask, then r_0 .. r_{n-1}."""
    table = intensity_table(interaction, threshold)
    frame = pd.DataFrame(table, columns=[f"r_{i}" for i in range(interaction.n)])
    frame.insert(0, "bitmask", np.arange(table.shape[0]))
    return frame


class IntensityTracker:
    """Keeps the factor of J_γ and the intensity profile current along a trajectory.

    Births append to the factor, deaths delete with a rank-one update, hops do both.
    ``verify`` compares against a fresh factorization and refactorizes on drift.
    """

    def __init__(
        self,
        interaction: InteractionOperator,
        configuration: Configuration,
        threshold: float = ZERO_THRESHOLD,
        pivot_tolerance: float = PIVOT_TOLERANCE,
    ):
        self.interaction = interaction
        self.threshold = threshold
        self.configuration = configuration
        self.refactorizations = 0
        self._chol = IncrementalCholesky.from_indices(interaction.matrix, configuration.occupied, pivot_tolerance)
        self._refresh()

    def _refresh(self) -> None:
        self.values = _profile_from_factor(self.interaction.matrix, self._chol, self.threshold)
        self._removal: np.ndarray | None = None

    @property
    def profile(self) -> IntensityProfile:
        return IntensityProfile(self.configuration, self.values)

    def removal(self) -> np.ndarray:
        """Removal profiles with rows in sorted order of the occupied sites."""
        if self._removal is None:
            rows = _removal_from_factor(self.interaction.matrix, self._chol, self.values, self.threshold)
            if rows.shape[0]:
                pos = [self._chol.position(i) for i in self.configuration.occupied]
                rows = rows[pos]
            self._removal = rows
        return self._removal

    def birth(self, site: int) -> None:
        self.configuration = self.configuration.add(site)
        self._chol.append(site)
        self._refresh()

    def death(self, site: int) -> None:
        self.configuration = self.configuration.remove(site)
        self._chol.remove(site)
        self._refresh()

    def hop(self, source: int, target: int) -> None:
        self.configuration = self.configuration.move(source, target)
        self._chol.remove(source)
        self._chol.append(target)
        self._refresh()

    def refactorize(self) -> None:
        self._chol.rebuild(self.configuration.occupied)
        self.refactorizations += 1
        self._refresh()

    def verify(self, tolerance: float = DRIFT_TOLERANCE) -> float:
        """Max deviation of the maintained profile from a fresh one; refactorizes above tolerance."""
        fresh = intensity_profile(self.interaction, self.configuration, self.threshold).values
        deviation = float(np.max(np.abs(fresh - self.values))) if fresh.size else 0.0
        residual = 0.0 if self._chol.singular else self._chol.residual()
        if deviation > tolerance or residual > tolerance:
            logger.warning(
                "Incremental intensity drifted by %.3e (factor residual %.3e); refactorizing",
                deviation,
                residual,
            )
            self.refactorize()
        return deviation
