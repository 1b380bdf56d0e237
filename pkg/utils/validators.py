from __future__ import annotations

from typing import List, Tuple

import numpy as np


def validate_square(matrix: np.ndarray, n: int | None = None) -> Tuple[bool, List[str]]:
    errs: List[str] = []
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        errs.append(f"Expected a square matrix, got shape {m.shape}")
        return False, errs
    if n is not None and m.shape[0] != n:
        errs.append(f"Expected a {n}x{n} matrix, got {m.shape[0]}x{m.shape[1]}")
    if not np.all(np.isfinite(m)):
        errs.append("Matrix contains non-finite entries")
    return len(errs) == 0, errs


def symmetry_residual(matrix: np.ndarray) -> float:
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.T)))


def validate_probability_vector(p: np.ndarray, tol: float = 1e-10) -> Tuple[bool, List[str]]:
    errs: List[str] = []
    arr = np.asarray(p, dtype=float)
    if np.any(arr < -tol):
        errs.append("Probability vector has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        errs.append(f"Probabilities sum to {total!r}, not 1")
    return len(errs) == 0, errs


def validate_unit_interval(value: float, name: str, closed_right: bool = True) -> Tuple[bool, List[str]]:
    errs: List[str] = []
    upper_ok = value <= 1.0 if closed_right else value < 1.0
    if not np.isfinite(value) or value < 0.0 or not upper_ok:
        bracket = "]" if closed_right else ")"
        errs.append(f"{name} must lie in [0, 1{bracket}, got {value}")
    return len(errs) == 0, errs
