from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import pandas as pd

from intensity.papangelou import intensity_table
from kernel.interaction import InteractionOperator
from kernel.kernel_builder import KernelOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration, occupancy_matrix
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, check_enumerable, exact_distribution

Samples = Union[np.ndarray, Sequence[Configuration]]
TestFunction = Union[np.ndarray, Callable[[int, Configuration], float]]


def _as_occupancy(samples: Samples, n_sites: int) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        occ = samples.astype(bool)
    else:
        occ = np.array([c.indicator() for c in samples], dtype=bool).reshape(-1, n_sites)
    if occ.ndim != 2 or occ.shape[1] != n_sites:
        raise ValueError(f"Samples must have {n_sites} columns, got shape {occ.shape}")
    return occ


def estimate_correlation(samples: Samples, space: SiteSpace, order: int = 1) -> pd.DataFrame:
    """Empirical correlation functions: inclusion frequencies divided by the site weights."""
    if order not in (1, 2):
        raise ValueError(f"Correlation order must be 1 or 2, got {order}")
    occ = _as_occupancy(samples, space.n)
    draws = occ.shape[0]
    if draws == 0:
        raise ValueError("Need at least one sample")
    w = space.weights
    if order == 1:
        freq = occ.mean(axis=0)
        stderr = np.sqrt(freq * (1.0 - freq) / draws)
        return pd.DataFrame(
            {
                "site": np.arange(space.n),
                "position": space.positions,
                "estimate": freq / w,
                "stderr": stderr / w,
            }
        )
    i, j = np.triu_indices(space.n, k=1)
    occ_f = occ.astype(float)
    joint = (occ_f.T @ occ_f / draws)[i, j]
    stderr = np.sqrt(joint * (1.0 - joint) / draws)
    scale = w[i] * w[j]
    return pd.DataFrame(
        {
            "site_i": i,
            "site_j": j,
            "estimate": joint / scale,
            "stderr": stderr / scale,
        }
    )


def exact_correlation(kernel: KernelOperator, order: int = 1) -> pd.DataFrame:
    """det(K(x_i, x_j)) targets for orders 1 and 2."""
    if order not in (1, 2):
        raise ValueError(f"Correlation order must be 1 or 2, got {order}")
    k = kernel.matrix
    if order == 1:
        return pd.DataFrame({"site": np.arange(kernel.n), "target": np.diag(k).copy()})
    i, j = np.triu_indices(kernel.n, k=1)
    target = k[i, i] * k[j, j] - k[i, j] * k[j, i]
    return pd.DataFrame({"site_i": i, "site_j": j, "target": target})


def correlation_table(samples: Samples, kernel: KernelOperator, order: int = 1) -> pd.DataFrame:
    """Estimates joined with exact targets plus the deviation in standard errors."""
    est = estimate_correlation(samples, kernel.space, order)
    target = exact_correlation(kernel, order)
    keys = ["site"] if order == 1 else ["site_i", "site_j"]
    merged = est.merge(target, on=keys, how="left")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (merged["estimate"] - merged["target"]) / merged["stderr"]
    merged["z_score"] = np.where(merged["stderr"] > 0, z, np.where(np.isclose(merged["estimate"], merged["target"]), 0.0, np.inf))
    return merged


def fraction_within(frame: pd.DataFrame, sigma: float = 3.0) -> float:
    """Share of rows whose z-score lies within ``sigma`` standard errors."""
    if frame.empty:
        return 1.0
    return float(np.mean(np.abs(frame["z_score"].to_numpy(dtype=float)) <= sigma))


@dataclass(frozen=True)
class MeckeResult:
    lhs: float
    rhs: float
    residual: float


def tabulate_test_function(f: TestFunction, n_sites: int) -> np.ndarray:
    """F as an (n, 2^n) array: F[x, bitmask]."""
    if isinstance(f, np.ndarray):
        table = np.asarray(f, dtype=float)
        if table.shape != (n_sites, 1 << n_sites):
            raise ValueError(f"Test function table must have shape {(n_sites, 1 << n_sites)}, got {table.shape}")
        return table
    table = np.empty((n_sites, 1 << n_sites))
    for mask in range(1 << n_sites):
        config = Configuration.from_bitmask(mask, n_sites)
        for x in range(n_sites):
            table[x, mask] = f(x, config)
    return table


def mecke_check(
    interaction: InteractionOperator,
    space: SiteSpace,
    f: TestFunction,
    table: MeasureTable | None = None,
    intensities: np.ndarray | None = None,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
) -> MeckeResult:
    """Both sides of E[Σ_{x∈γ} F(x,γ)] = E[Σ_{x∉γ} ν_x r(x,γ) F(x,γ∪x)] by enumeration."""
    n = space.n
    check_enumerable(n, limit)
    if table is None:
        table = exact_distribution(interaction, space, limit)
    r = intensity_table(interaction) if intensities is None else intensities
    ftab = tabulate_test_function(f, n)
    occ = occupancy_matrix(n)
    masks = np.arange(1 << n)
    mu = table.probabilities

    lhs = 0.0
    rhs = 0.0
    for x in range(n):
        bit = 1 << x
        inside = occ[:, x]
        lhs += float(np.sum(mu[inside] * ftab[x, masks[inside]]))
        outside = ~inside
        grown = masks[outside] | bit
        rhs += float(np.sum(mu[outside] * space.weights[x] * r[outside, x] * ftab[x, grown]))
    return MeckeResult(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs))


def density_ratio_residual(table: MeasureTable, space: SiteSpace, intensities: np.ndarray) -> float:
    """max |μ(γ∪x) - μ(γ) r(x,γ) ν_x| over all γ and vacant x."""
    n = space.n
    occ = occupancy_matrix(n)
    masks = np.arange(1 << n)
    mu = table.probabilities
    worst = 0.0
    for x in range(n):
        outside = ~occ[:, x]
        grown = masks[outside] | (1 << x)
        diff = mu[grown] - mu[outside] * intensities[outside, x] * space.weights[x]
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def marginal_residual(table: MeasureTable, kernel: KernelOperator) -> float:
    """max_i |Σ_{γ∋i} μ(γ) - S_ii|."""
    return float(np.max(np.abs(table.marginals() - np.diag(kernel.symmetrized()))))
