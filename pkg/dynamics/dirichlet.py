from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from dynamics.generator import GeneratorMatrix, build_generator
from dynamics.rates import RateFamily, removal_intensities
from intensity.papangelou import intensity_profile, removal_profiles
from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.dpp import MeasureTable


def _as_table(f: np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.shape != (1 << n,):
        raise ValueError(f"Function table must have {1 << n} entries, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class FormEdges:
    """Weighted moves (γ -> γ') of the Dirichlet form; E(F,G) = Σ w (F(γ')-F(γ))(G(γ')-G(γ))."""

    n_sites: int
    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray

    def evaluate(self, f: np.ndarray, g: np.ndarray) -> float:
        f = _as_table(f, self.n_sites)
        g = _as_table(g, self.n_sites)
        df = f[self.target] - f[self.source]
        dg = g[self.target] - g[self.source]
        return float(np.sum(self.weight * df * dg))


def form_edges(interaction: InteractionOperator, space: SiteSpace, table: MeasureTable, family: RateFamily) -> FormEdges:
    """Glauber: weight μ(γ) d(x,γ∖x) on γ -> γ∖x.
    Kawasaki: weight μ(γ) ν_y c(x,y,γ∖x) on γ -> γ∖x∪y.
    """
    n = space.n
    mu = table.probabilities
    nu = space.weights
    source: List[int] = []
    target: List[int] = []
    weight: List[float] = []
    for mask in range(1 << n):
        if mu[mask] == 0.0:
            continue
        config = Configuration.from_bitmask(mask, n)
        occ = list(config.occupied)
        if not occ:
            continue
        profile = intensity_profile(interaction, config, family.threshold).values
        if family.kind == "glauber":
            for x, rate in zip(occ, family.death(profile[occ])):
                source.append(mask)
                target.append(mask & ~(1 << x))
                weight.append(mu[mask] * float(rate))
            continue
        removal = removal_profiles(interaction, config, family.threshold)
        vac = list(config.vacant())
        for k, x in enumerate(occ):
            c = family.hop_matrix(removal_intensities(profile, removal[k], x))
            for y in vac:
                source.append(mask)
                target.append((mask & ~(1 << x)) | (1 << y))
                weight.append(mu[mask] * nu[y] * float(c[x, y]))
    return FormEdges(n, np.array(source, dtype=np.int64), np.array(target, dtype=np.int64), np.array(weight))


def dirichlet_form(
    interaction: InteractionOperator,
    space: SiteSpace,
    table: MeasureTable,
    family: RateFamily,
    f: np.ndarray,
    g: np.ndarray,
) -> float:
    """E(F, G) summed over configurations.

    Glauber:  Σ_γ μ(γ) Σ_{x∈γ} d(x,γ∖x) (F(γ∖x)-F(γ)) (G(γ∖x)-G(γ)).
    Kawasaki: Σ_γ μ(γ) Σ_{x∈γ} Σ_{y∉γ} ν_y c(x,y,γ∖x) (F(γ∖x∪y)-F(γ)) (G(γ∖x∪y)-G(γ)).
    """
    return form_edges(interaction, space, table, family).evaluate(f, g)


def generator_pairing(q: GeneratorMatrix, table: MeasureTable, f: np.ndarray, g: np.ndarray) -> float:
    """⟨F, -QG⟩_μ."""
    n = q.n_sites
    f = _as_table(f, n)
    g = _as_table(g, n)
    return float(np.sum(table.probabilities * f * -(q.matrix @ g)))


@dataclass(frozen=True)
class DualityResult:
    form: float
    pairing: float

    @property
    def residual(self) -> float:
        return abs(self.form - self.pairing)


def form_duality(
    interaction: InteractionOperator,
    space: SiteSpace,
    family: RateFamily,
    table: MeasureTable,
    f: np.ndarray,
    g: np.ndarray,
    q: GeneratorMatrix | None = None,
    edges: FormEdges | None = None,
) -> DualityResult:
    if q is None:
        q = build_generator(interaction, space, family)
    if edges is None:
        edges = form_edges(interaction, space, table, family)
    return DualityResult(form=edges.evaluate(f, g), pairing=generator_pairing(q, table, f, g))
