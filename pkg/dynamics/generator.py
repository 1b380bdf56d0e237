from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from scipy import sparse

from dynamics.rates import RateFamily, family_rates_on
from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration, particle_numbers
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, check_enumerable

logger = logging.getLogger(__name__)

DENSE_MAX = 12
CONSERVATIVITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Markov generator L = -H over all 2^n configurations, indexed by bitmask.

    Off-diagonal entry (γ, γ') is the jump rate q(γ, γ'); the diagonal makes rows sum to zero.
    """

    matrix: sparse.csr_matrix
    kind: str
    n_sites: int

    @property
    def n_states(self) -> int:
        return 1 << self.n_sites

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def rate(self, source: Configuration, target: Configuration) -> float:
        return float(self.matrix[source.bitmask, target.bitmask])

    def to_triplets(self) -> pd.DataFrame:
        """Off-diagonal nonzeros as (row bitmask, column bitmask, rate), row-major order."""
        coo = self.matrix.tocoo()
        keep = (coo.row != coo.col) & (coo.data != 0.0)
        frame = pd.DataFrame({"row_state": coo.row[keep], "col_state": coo.col[keep], "rate": coo.data[keep]})
        return frame.sort_values(["row_state", "col_state"], kind="mergesort").reset_index(drop=True)


def _assemble(rows: List[int], cols: List[int], vals: List[float], n: int, kind: str) -> GeneratorMatrix:
    size = 1 << n
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    q = (off - sparse.diags(exit_rates)).tocsr()
    q.eliminate_zeros()
    return GeneratorMatrix(q, kind, n)


def _check_family(family: RateFamily, kind: str, n: int) -> None:
    if family.kind != kind:
        raise ValueError(f"Expected a {kind} rate family, got {family.kind}")
    if family.mobility is not None and family.mobility.shape != (n, n):
        raise ValueError(f"Mobility table is {family.mobility.shape}, expected {(n, n)}")


def glauber_generator(
    interaction: InteractionOperator, space: SiteSpace, family: RateFamily, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> GeneratorMatrix:
    """q(γ, γ∖x) = d(x, γ∖x) and q(γ, γ∪x) = b(x, γ) ν_x."""
    n = space.n
    check_enumerable(n, limit)
    _check_family(family, "glauber", n)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for mask in range(1 << n):
        config = Configuration.from_bitmask(mask, n)
        deaths, births = family_rates_on(interaction, config, family, space.weights)
        for x, rate in zip(config.occupied, deaths):
            if rate > 0.0:
                rows.append(mask)
                cols.append(mask & ~(1 << x))
                vals.append(float(rate))
        for x, rate in zip(config.vacant(), births):
            if rate > 0.0:
                rows.append(mask)
                cols.append(mask | (1 << x))
                vals.append(float(rate))
    q = _assemble(rows, cols, vals, n, "glauber")
    logger.info("Assembled Glauber generator on %d states (%d transitions)", q.n_states, len(vals))
    return q


def kawasaki_generator(
    interaction: InteractionOperator, space: SiteSpace, family: RateFamily, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> GeneratorMatrix:
    """q(γ, γ∖x∪y) = 2 c(x, y, γ∖x) ν_y."""
    n = space.n
    check_enumerable(n, limit)
    _check_family(family, "kawasaki", n)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for mask in range(1 << n):
        config = Configuration.from_bitmask(mask, n)
        hops = family_rates_on(interaction, config, family, space.weights)
        vac = config.vacant()
        for k, x in enumerate(config.occupied):
            for m, y in enumerate(vac):
                rate = float(hops[k, m])
                if rate > 0.0:
                    rows.append(mask)
                    cols.append((mask & ~(1 << x)) | (1 << y))
                    vals.append(rate)
    q = _assemble(rows, cols, vals, n, "kawasaki")
    logger.info("Assembled Kawasaki generator on %d states (%d transitions)", q.n_states, len(vals))
    return q


def build_generator(
    interaction: InteractionOperator, space: SiteSpace, family: RateFamily, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> GeneratorMatrix:
    if family.kind == "glauber":
        return glauber_generator(interaction, space, family, limit)
    return kawasaki_generator(interaction, space, family, limit)


def reversibility_check(q: GeneratorMatrix, table: MeasureTable) -> float:
    """max |μ(γ) q(γ,γ') - μ(γ') q(γ',γ)|."""
    if table.n_sites != q.n_sites:
        raise ValueError(f"Generator on {q.n_sites} sites, measure on {table.n_sites}")
    flux = sparse.diags(table.probabilities) @ q.matrix
    diff = (flux - flux.T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def conservativity_residual(q: GeneratorMatrix) -> float:
    """max |row sum|."""
    return float(np.max(np.abs(np.asarray(q.matrix.sum(axis=1)).ravel())))


def structure_violations(q: GeneratorMatrix) -> int:
    """Count of transitions that are negative or connect states not one move apart.

    Glauber moves flip one site; Kawasaki moves exchange one occupied and one
    vacant site and keep the particle number.
    """
    coo = q.matrix.tocoo()
    off = coo.row != coo.col
    rows, cols, data = coo.row[off], coo.col[off], coo.data[off]
    flipped = np.array([bin(int(a) ^ int(b)).count("1") for a, b in zip(rows, cols)], dtype=int)
    sizes = particle_numbers(q.n_sites)
    bad = data < 0.0
    if q.kind == "glauber":
        bad |= flipped != 1
    else:
        bad |= (flipped != 2) | (sizes[rows] != sizes[cols])
    return int(np.count_nonzero(bad))
