from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from dynamics.rates import RateFamily, removal_intensities
from intensity.papangelou import intensity_profile, removal_profiles
from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.dpp import DEFAULT_ENUMERATION_LIMIT, MeasureTable, check_enumerable, exact_distribution

logger = logging.getLogger(__name__)


@dataclass
class ConditionReport:
    """Finite-volume values of the integrability conditions, with Λ the whole site set.

    Expectations are exact sums against the enumerated measure; ``None`` marks
    quantities that do not apply to the dynamics kind.
    """

    kind: str
    s: float
    mobility_sup: float | None
    diagonal_sup: float
    expectations: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "s": self.s,
            "sup_mobility_row_mass": self.mobility_sup,
            "sup_diagonal_J": self.diagonal_sup,
            "expectations": dict(self.expectations),
            "all_finite": all(np.isfinite(v) for v in self.expectations.values()),
        }


def _moments(values: np.ndarray, mu: np.ndarray) -> tuple[float, float]:
    """(E|X|, sqrt(E X^2))"""
    return float(mu @ np.abs(values)), float(np.sqrt(mu @ values**2))


def condition_diagnostics(
    interaction: InteractionOperator,
    space: SiteSpace,
    family: RateFamily,
    table: MeasureTable | None = None,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
) -> ConditionReport:
    n = space.n
    nu = space.weights
    mobility_sup = None
    if family.mobility is not None:
        mobility_sup = float(np.max(family.mobility @ nu))
    report = ConditionReport(
        kind=family.kind,
        s=family.s,
        mobility_sup=mobility_sup,
        diagonal_sup=float(np.max(interaction.diagonal())),
    )
    if n > limit:
        logger.info("Skipping expectation diagnostics: %d sites over the enumeration limit %d", n, limit)
        return report
    check_enumerable(n, limit)
    if table is None:
        table = exact_distribution(interaction, space, limit)
    mu = table.probabilities

    if family.kind == "glauber":
        deaths = np.zeros(1 << n)
        births = np.zeros(1 << n)
        for mask in range(1 << n):
            config = Configuration.from_bitmask(mask, n)
            r = intensity_profile(interaction, config, family.threshold).values
            occ = list(config.occupied)
            vac = list(config.vacant())
            deaths[mask] = float(np.sum(family.death(r[occ])))
            births[mask] = float(np.sum(nu[vac] * family.birth(r[vac])))
        d1, d2 = _moments(deaths, mu)
        b1, b2 = _moments(births, mu)
        report.expectations.update(
            {"death_l1": d1, "death_l2": d2, "birth_l1": b1, "birth_l2": b2}
        )
        return report

    # Kawasaki: first moment and square of Σ_{x∈γ} Σ_y ν_y c(x,y,γ∖x)(χ_Λ(x)+χ_Λ(y)),
    # and the closability functional Σ_x ν_x Σ_{y∈γ} r(x,γ∖y) r(y,γ∖y)^{-s} c(x,y,γ∖y)
    hops = np.zeros(1 << n)
    closability = np.zeros(1 << n)
    u = -family.s
    for mask in range(1 << n):
        config = Configuration.from_bitmask(mask, n)
        occ = list(config.occupied)
        if not occ:
            continue
        r = intensity_profile(interaction, config, family.threshold).values
        removal = removal_profiles(interaction, config, family.threshold)
        vac = list(config.vacant())
        for k, x in enumerate(occ):
            rv = removal_intensities(r, removal[k], x)
            c = family.hop_matrix(rv)
            # x ∈ γ here plays the role of the removed point for both functionals
            hops[mask] += 2.0 * float(np.sum(c[x, vac] * nu[vac]))
            ry = rv[x]
            if ry > family.threshold and vac:
                closability[mask] += float(np.sum(nu[vac] * rv[vac] * c[vac, x])) * ry**u
    h1, h2 = _moments(hops, mu)
    c1, c2 = _moments(closability, mu)
    report.expectations.update(
        {"hop_l1": h1, "hop_l2": h2, "closability_l1": c1, "closability_l2": c2}
    )
    return report
