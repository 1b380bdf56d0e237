from __future__ import annotations

import logging
from typing import Any, Dict, Optional

import numpy as np
from scipy.linalg import eigh

from kernel.kernel_builder import KernelOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, empirical_law, total_variation
from utils.errors import PSDLossError

logger = logging.getLogger(__name__)

BREAKDOWN_TOLERANCE = 1e-8


def replica_rng(master_seed: int, replica: int = 0) -> np.random.Generator:
    """Independent stream for one replica, fixed by (master seed, replica index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replica),)))


class SpectralSampler:
    """Exact sampler for the determinantal process with marginal kernel S = D^{1/2} K D^{1/2}.

    Stream order per draw: n uniforms for the eigenvector coins (ascending
    eigenvalue order), then one uniform per selected point.
    """

    def __init__(self, kernel: KernelOperator, breakdown_tolerance: float = BREAKDOWN_TOLERANCE):
        s = kernel.symmetrized()
        lam, vecs = eigh(0.5 * (s + s.T))
        self.n = kernel.n
        self.eigenvalues = np.clip(lam, 0.0, 1.0)
        self.eigenvectors = vecs
        self.breakdown_tolerance = breakdown_tolerance

    def sample_indices(self, rng: np.random.Generator) -> list[int]:
        coins = rng.random(self.n)
        v = self.eigenvectors[:, coins < self.eigenvalues]
        k = v.shape[1]
        if k == 0:
            return []
        # projection kernel of the selected eigenvectors, downdated after every pick
        proj = v @ v.T
        chosen: list[int] = []
        for _ in range(k):
            variances = np.diag(proj).copy()
            worst = float(variances.min())
            if worst < -self.breakdown_tolerance:
                raise PSDLossError(f"Conditional variance {worst:.3e} in spectral sampler")
            variances = np.clip(variances, 0.0, None)
            variances[chosen] = 0.0
            total = float(variances.sum())
            if total <= 0.0:
                raise PSDLossError("Spectral sampler ran out of conditional mass")
            cumulative = np.cumsum(variances)
            i = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
            i = min(i, self.n - 1)
            chosen.append(i)
            col = proj[:, i].copy()
            proj = proj - np.outer(col, col) / col[i]
        return sorted(chosen)

    def sample(self, rng: np.random.Generator) -> Configuration:
        return Configuration(self.n, tuple(self.sample_indices(rng)))

    def sample_many(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Occupancy indicators, one row per draw."""
        draws = np.zeros((count, self.n), dtype=bool)
        for row in range(count):
            draws[row, self.sample_indices(rng)] = True
        return draws


def sample(kernel: KernelOperator, space: SiteSpace, rng: np.random.Generator) -> Configuration:
    if kernel.n != space.n:
        raise ValueError("Kernel and site space sizes differ")
    return SpectralSampler(kernel).sample(rng)


def summarize_draws(
    draws: np.ndarray,
    kernel: KernelOperator,
    table: Optional[MeasureTable] = None,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
) -> Dict[str, Any]:
    """Mean configuration size against tr S, plus the TV distance to the exact law when one is given."""
    draws = np.asarray(draws, dtype=bool)
    summary: Dict[str, Any] = {
        "draws": int(draws.shape[0]),
        "mean_size": float(draws.sum(axis=1).mean()) if draws.shape[0] else 0.0,
        "expected_size": float(np.trace(kernel.symmetrized())),
    }
    if table is not None:
        summary["tv_to_exact"] = total_variation(empirical_law(draws, limit), table.probabilities)
    return summary
