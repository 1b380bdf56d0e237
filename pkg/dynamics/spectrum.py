from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from dynamics.generator import DENSE_MAX, GeneratorMatrix, reversibility_check
from measure.configuration import particle_numbers
from measure.dpp import MeasureTable
from utils.errors import NonReversibleError

logger = logging.getLogger(__name__)

REVERSIBILITY_TOL = 1e-10
ZERO_EIGEN_TOL = 1e-8
SPARSE_EIGEN_COUNT = 6
SHIFT = -1e-3


@dataclass
class SectorSpectrum:
    particles: Optional[int]
    states: int
    eigenvalues: np.ndarray
    gap: Optional[float]
    zero_count: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "particles": self.particles,
            "states": self.states,
            "eigenvalues": self.eigenvalues.tolist(),
            "gap": self.gap if self.gap is not None else "none",
            "zero_count": self.zero_count,
        }


@dataclass
class SpectralReport:
    """Spectrum of -Q in the μ-weighted inner product.

    For Kawasaki dynamics the gap is the smallest within-sector gap; sectors
    are the particle-number classes the dynamics cannot leave.
    """

    kind: str
    method: str
    eigenvalues: np.ndarray
    gap: Optional[float]
    zero_count: int
    reversibility_residual: float
    sectors: List[SectorSpectrum] = field(default_factory=list)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "method": self.method,
            "eigenvalues": self.eigenvalues.tolist(),
            "gap": self.gap if self.gap is not None else "none",
            "zero_count": self.zero_count,
            "min_eigenvalue": self.min_eigenvalue,
            "reversibility_residual": self.reversibility_residual,
            "sectors": [s.to_dict() for s in self.sectors],
        }


def symmetrized_operator(q: GeneratorMatrix, table: MeasureTable, states: np.ndarray) -> sparse.csr_matrix:
    """D_μ^{1/2} (-Q) D_μ^{-1/2} restricted to ``states``."""
    root = np.sqrt(table.probabilities[states])
    sub = -q.matrix[states][:, states]
    s = sparse.diags(root) @ sub @ sparse.diags(1.0 / root)
    return (0.5 * (s + s.T)).tocsr()


def _zero_tol(eig: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(eig)))) if eig.size else 1.0
    return ZERO_EIGEN_TOL * scale


def _block_spectrum(s: sparse.csr_matrix, dense: bool, count: int) -> np.ndarray:
    size = s.shape[0]
    if dense or size <= count + 1:
        return eigh(s.toarray(), eigvals_only=True)
    # shift-invert around a point just below 0 picks out the bottom of the spectrum
    vals = eigsh(s.tocsc(), k=count, sigma=SHIFT, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def _sector(particles: Optional[int], eig: np.ndarray) -> SectorSpectrum:
    tol = _zero_tol(eig)
    nonzero = eig[eig > tol]
    return SectorSpectrum(
        particles=particles,
        states=int(eig.size),
        eigenvalues=eig,
        gap=float(nonzero[0]) if nonzero.size else None,
        zero_count=int(np.count_nonzero(np.abs(eig) <= tol)),
    )


def spectral_analysis(
    q: GeneratorMatrix,
    table: MeasureTable,
    dense_max: int = DENSE_MAX,
    eigen_count: int = SPARSE_EIGEN_COUNT,
    reversibility_tol: float = REVERSIBILITY_TOL,
) -> SpectralReport:
    residual = reversibility_check(q, table)
    if residual > reversibility_tol:
        raise NonReversibleError(f"Generator is not μ-reversible (residual {residual:.3e} > {reversibility_tol:.1e})")

    dense = q.n_sites <= dense_max
    support = table.probabilities > 0.0
    if not np.all(support):
        logger.info("Excluding %d zero-probability states from the spectral problem", int(np.count_nonzero(~support)))

    if q.kind == "kawasaki":
        sizes = particle_numbers(q.n_sites)
        groups = [(m, np.flatnonzero(support & (sizes == m))) for m in range(q.n_sites + 1)]
    else:
        groups = [(None, np.flatnonzero(support))]

    sectors: List[SectorSpectrum] = []
    for m, states in groups:
        if states.size == 0:
            continue
        eig = _block_spectrum(symmetrized_operator(q, table, states), dense, eigen_count)
        sectors.append(_sector(m, eig))

    all_eig = np.sort(np.concatenate([s.eigenvalues for s in sectors]))
    gaps = [s.gap for s in sectors if s.gap is not None]
    report = SpectralReport(
        kind=q.kind,
        method="dense" if dense else "shift-invert",
        eigenvalues=all_eig,
        gap=min(gaps) if gaps else None,
        zero_count=sum(s.zero_count for s in sectors),
        reversibility_residual=residual,
        sectors=sectors if q.kind == "kawasaki" else [],
    )
    logger.info("Spectral gap (%s, %s): %s", q.kind, report.method, report.gap if report.gap is not None else "none")
    return report
