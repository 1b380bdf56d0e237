from __future__ import annotations

from typing import List, Sequence

import numpy as np
from scipy.linalg import solve_triangular

PIVOT_TOLERANCE = 1e-12


def choldate(factor: np.ndarray, x: np.ndarray, sign: int = 1) -> np.ndarray:
    """In-place rank-one update (sign=+1) or downdate (sign=-1) of a lower Cholesky factor.

    Returns the factor of L L^T + sign * x x^T. ``x`` is consumed.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    p = factor.shape[0]
    if x.shape != (p,):
        raise ValueError("Invalid dimensions")
    for k in range(p):
        r_squared = factor[k, k] ** 2 + sign * x[k] ** 2
        if r_squared <= 0.0:
            raise np.linalg.LinAlgError("Cholesky downdate lost positive definiteness")
        r = np.sqrt(r_squared)
        c = r / factor[k, k]
        s = x[k] / factor[k, k]
        factor[k, k] = r
        factor[k + 1 :, k] = (factor[k + 1 :, k] + sign * s * x[k + 1 :]) / c
        x[k + 1 :] = c * x[k + 1 :] - s * factor[k + 1 :, k]
    return factor


class IncrementalCholesky:
    """Lower Cholesky factor of a principal submatrix J[order, order], grown and shrunk site by site.

    Rows follow ``order`` (insertion order, not sorted). A pivot below the tolerance
    marks the submatrix singular; the factor is then no longer maintained and
    removals rebuild it from scratch.
    """

    def __init__(self, matrix: np.ndarray, pivot_tolerance: float = PIVOT_TOLERANCE):
        self.matrix = np.asarray(matrix, dtype=float)
        self.pivot_tolerance = pivot_tolerance
        self.order: List[int] = []
        self.factor = np.zeros((0, 0))
        self.singular = False

    @classmethod
    def from_indices(cls, matrix: np.ndarray, indices: Sequence[int], pivot_tolerance: float = PIVOT_TOLERANCE) -> "IncrementalCholesky":
        chol = cls(matrix, pivot_tolerance)
        for i in indices:
            chol.append(int(i))
        return chol

    @property
    def size(self) -> int:
        return len(self.order)

    def position(self, index: int) -> int:
        return self.order.index(index)

    def append(self, index: int) -> bool:
        """Adds a site; returns False once the submatrix has become singular."""
        if index in self.order:
            raise ValueError(f"Site {index} already in the factor")
        if self.singular:
            self.order.append(index)
            return False
        m = len(self.order)
        col = self.matrix[self.order, index]
        l = solve_triangular(self.factor, col, lower=True) if m else np.zeros(0)
        pivot = self.matrix[index, index] - float(l @ l)
        self.order.append(index)
        if pivot < self.pivot_tolerance:
            self.singular = True
            return False
        grown = np.zeros((m + 1, m + 1))
        grown[:m, :m] = self.factor
        grown[m, :m] = l
        grown[m, m] = np.sqrt(pivot)
        self.factor = grown
        return True

    def remove(self, index: int) -> None:
        k = self.position(index)
        if self.singular:
            remaining = [i for i in self.order if i != index]
            self.rebuild(remaining)
            return
        tail = self.factor[k + 1 :, k].copy()
        trailing = self.factor[k + 1 :, k + 1 :].copy()
        if tail.size:
            choldate(trailing, tail, +1)
        keep = [i for i in range(len(self.order)) if i != k]
        shrunk = self.factor[np.ix_(keep, keep)]
        shrunk[k:, k:] = trailing
        self.factor = np.tril(shrunk)
        self.order.pop(k)

    def rebuild(self, indices: Sequence[int] | None = None) -> None:
        indices = list(self.order if indices is None else indices)
        self.order = []
        self.factor = np.zeros((0, 0))
        self.singular = False
        for i in indices:
            self.append(int(i))

    def residual(self) -> float:
        """max |L L^T - J[order, order]|; infinite once singular."""
        if self.singular:
            return float("inf")
        if not self.order:
            return 0.0
        sub = self.matrix[np.ix_(self.order, self.order)]
        return float(np.max(np.abs(self.factor @ self.factor.T - sub)))

    def inverse_factor(self) -> np.ndarray:
        """L^{-1}, so that (J_γ)^{-1} = L^{-T} L^{-1}."""
        m = len(self.order)
        return solve_triangular(self.factor, np.eye(m), lower=True)
