from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from kernel.kernel_builder import (
    DEFAULT_EPSILON,
    NEGATIVE_EIGEN_TOL,
    KernelOperator,
    symmetrize_weighted,
    unsymmetrize_weighted,
)
from kernel.site_space import SiteSpace
from utils.errors import SingularInverseError

logger = logging.getLogger(__name__)

MIN_MARGIN = 1e-10


@dataclass(frozen=True, eq=False)
class InteractionOperator:
    """J = K(1 - K)^{-1} together with the eigen-decomposition of its symmetrized form.

    ``eigenvalues``/``eigenvectors`` belong to L = D^{1/2} J D^{1/2}, which is the
    L-ensemble matrix of the finite-volume process.
    """

    matrix: np.ndarray
    space: SiteSpace
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        for name in ("matrix", "eigenvalues", "eigenvectors"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.space.n

    def symmetrized(self) -> np.ndarray:
        return symmetrize_weighted(self.matrix, self.space)

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def correlation_kernel(self) -> KernelOperator:
        return correlation_kernel(self)


def _from_symmetric_spectrum(eig: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    m = (vecs * eig) @ vecs.T
    return 0.5 * (m + m.T)


def interaction_operator(kernel: KernelOperator, min_margin: float = MIN_MARGIN) -> InteractionOperator:
    s = kernel.symmetrized()
    lam, vecs = eigh(0.5 * (s + s.T))
    margin = 1.0 - float(lam[-1])
    if margin < min_margin:
        raise SingularInverseError(f"1 - K is singular: spectral margin {margin:.3e} below tolerance {min_margin:.1e}")
    if lam[0] < -NEGATIVE_EIGEN_TOL:
        logger.warning("Kernel has negative eigenvalue %.3e; clipping to 0", lam[0])
    lam = np.clip(lam, 0.0, None)
    mapped = lam / (1.0 - lam)
    l_sym = _from_symmetric_spectrum(mapped, vecs)
    return InteractionOperator(
        matrix=unsymmetrize_weighted(l_sym, kernel.space),
        space=kernel.space,
        eigenvalues=mapped,
        eigenvectors=vecs,
        epsilon=kernel.epsilon,
    )


def correlation_kernel(interaction: InteractionOperator) -> KernelOperator:
    """Inverse map K = J (1 + J)^{-1}."""
    mu = interaction.eigenvalues
    k_sym = _from_symmetric_spectrum(mu / (1.0 + mu), interaction.eigenvectors)
    return KernelOperator(unsymmetrize_weighted(k_sym, interaction.space), interaction.space, interaction.epsilon)


def interaction_from_matrix(matrix: np.ndarray, space: SiteSpace, epsilon: float = DEFAULT_EPSILON) -> InteractionOperator:
    """Wraps a given PSD matrix as J directly (test instances, hand examples)."""
    l_sym = symmetrize_weighted(matrix, space)
    mu, vecs = eigh(0.5 * (l_sym + l_sym.T))
    if mu[0] < -NEGATIVE_EIGEN_TOL:
        raise ValueError(f"Interaction matrix is not positive semidefinite (min eigenvalue {mu[0]:.3e})")
    return InteractionOperator(np.asarray(matrix, dtype=float), space, np.clip(mu, 0.0, None), vecs, epsilon)
