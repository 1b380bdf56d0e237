from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from intensity.papangelou import ZERO_THRESHOLD, IntensityTracker, removal_profiles, intensity_profile
from kernel.interaction import InteractionOperator
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from utils.errors import NearSingularIntensityError
from utils.validators import symmetry_residual, validate_square, validate_unit_interval

logger = logging.getLogger(__name__)

RATE_CEILING = 1e12
DYNAMICS_KINDS = ("glauber", "kawasaki")
RATE_FORMS = ("power", "constant")
MOBILITY_TYPES = ("all_pairs", "nearest_neighbour", "gaussian", "matrix")


def _positive(r: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(r, dtype=float) > threshold


def check_ceiling(values: np.ndarray, ceiling: float = RATE_CEILING) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    worst = float(np.max(np.where(np.isnan(values), np.inf, values)))
    if worst > ceiling:
        raise NearSingularIntensityError(f"Rate {worst:.3e} above ceiling {ceiling:.1e}: near-singular intensity")
    return values


def death_rate(r_x: np.ndarray | float, s: float, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """d = r^{s-1} on {r > threshold}, 0 elsewhere."""
    r = np.asarray(r_x, dtype=float)
    pos = _positive(r, threshold)
    safe = np.where(pos, r, 1.0)
    return np.where(pos, safe ** (s - 1.0), 0.0)


def birth_rate(r_x: np.ndarray | float, s: float, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """b = r * d."""
    r = np.asarray(r_x, dtype=float)
    return r * death_rate(r, s, threshold)


def hop_rate(
    r_x: np.ndarray | float,
    r_y: np.ndarray | float,
    a_xy: np.ndarray | float,
    s: float,
    threshold: float = ZERO_THRESHOLD,
) -> np.ndarray:
    """c = a r_x^{s-1} r_y^s when both intensities are positive."""
    rx = np.asarray(r_x, dtype=float)
    ry = np.asarray(r_y, dtype=float)
    pos = _positive(rx, threshold) & _positive(ry, threshold)
    rx_safe = np.where(pos, rx, 1.0)
    ry_safe = np.where(pos, ry, 1.0)
    return np.where(pos, np.asarray(a_xy, dtype=float) * rx_safe ** (s - 1.0) * ry_safe**s, 0.0)


def symmetrize(
    c_xy: np.ndarray | float,
    c_yx: np.ndarray | float,
    r_x: np.ndarray | float,
    r_y: np.ndarray | float,
    threshold: float = ZERO_THRESHOLD,
) -> np.ndarray:
    """½(c_xy + c_yx χ{r_x > 0} r_y / r_x)."""
    rx = np.asarray(r_x, dtype=float)
    pos = _positive(rx, threshold)
    ratio = np.where(pos, np.asarray(r_y, dtype=float) / np.where(pos, rx, 1.0), 0.0)
    return 0.5 * (np.asarray(c_xy, dtype=float) + np.asarray(c_yx, dtype=float) * ratio)


@dataclass(frozen=True, eq=False)
class RateFamily:
    """Jump-rate family for Glauber (birth/death) or Kawasaki (hopping) dynamics.

    ``form="power"`` is d = r^{s-1}, c = a r_x^{s-1} r_y^s; ``form="constant"`` is
    d = 1, c = a on the support. ``scale`` multiplies d and c. With
    ``symmetrize`` the hop rates are replaced by their symmetrization.
    Mobility symmetry is not enforced here; asymmetric tables are logged.
    """

    kind: str
    s: float = 1.0
    mobility: np.ndarray | None = None
    form: str = "power"
    symmetrize: bool = False
    scale: float = 1.0
    threshold: float = ZERO_THRESHOLD
    ceiling: float = RATE_CEILING

    def __post_init__(self) -> None:
        if self.kind not in DYNAMICS_KINDS:
            raise ValueError(f"Unknown dynamics kind '{self.kind}'. Expected one of {', '.join(DYNAMICS_KINDS)}")
        if self.form not in RATE_FORMS:
            raise ValueError(f"Unknown rate form '{self.form}'. Expected one of {', '.join(RATE_FORMS)}")
        ok, errs = validate_unit_interval(self.s, "s")
        if not ok:
            raise ValueError("; ".join(errs))
        if not np.isfinite(self.scale) or self.scale < 0.0:
            raise ValueError(f"scale must be a nonnegative finite number, got {self.scale}")
        if self.kind == "kawasaki" and self.mobility is None:
            raise ValueError("Kawasaki dynamics needs a mobility table")
        if self.mobility is not None:
            a = np.array(self.mobility, dtype=float)
            ok, errs = validate_square(a)
            if not ok:
                raise ValueError("mobility: " + "; ".join(errs))
            if np.any(a < 0.0):
                raise ValueError("mobility entries must be nonnegative")
            np.fill_diagonal(a, 0.0)
            asym = symmetry_residual(a)
            if asym > 0.0:
                logger.warning("Mobility table is not symmetric (max |a_xy - a_yx| = %.3e)", asym)
            a.setflags(write=False)
            object.__setattr__(self, "mobility", a)

    @property
    def mobility_asymmetry(self) -> float:
        return 0.0 if self.mobility is None else symmetry_residual(self.mobility)

    def death(self, r: np.ndarray | float) -> np.ndarray:
        if self.form == "power":
            d = death_rate(r, self.s, self.threshold)
        else:
            d = np.where(_positive(np.asarray(r, dtype=float), self.threshold), 1.0, 0.0)
        return self.scale * d

    def birth(self, r: np.ndarray | float) -> np.ndarray:
        return np.asarray(r, dtype=float) * self.death(r)

    def raw_hop_matrix(self, r: np.ndarray) -> np.ndarray:
        """c(x, y, η) for all pairs, given the intensity vector r(·, η)."""
        if self.mobility is None:
            raise ValueError("Hop rates need a mobility table")
        r = np.asarray(r, dtype=float)
        rx, ry = r[:, None], r[None, :]
        if self.form == "power":
            c = hop_rate(rx, ry, self.mobility, self.s, self.threshold)
        else:
            support = _positive(rx, self.threshold) & _positive(ry, self.threshold)
            c = np.where(support, self.mobility, 0.0)
        return self.scale * c

    def hop_matrix(self, r: np.ndarray) -> np.ndarray:
        c = self.raw_hop_matrix(r)
        if not self.symmetrize:
            return c
        r = np.asarray(r, dtype=float)
        return symmetrize(c, c.T, r[:, None], r[None, :], self.threshold)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "s": self.s,
            "form": self.form,
            "symmetrize": self.symmetrize,
            "scale": self.scale,
            "mobility_asymmetry": self.mobility_asymmetry,
        }


def glauber_event_rates(
    profile: np.ndarray, configuration: Configuration, family: RateFamily, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(death rates over occupied sites, birth rates b·ν over vacant sites), both in sorted site order.

    ``profile`` holds r(x, γ∖x) at occupied and r(x, γ) at vacant sites.
    """
    occ = list(configuration.occupied)
    vac = list(configuration.vacant())
    deaths = check_ceiling(family.death(profile[occ]), family.ceiling)
    births = check_ceiling(family.birth(profile[vac]) * weights[vac], family.ceiling)
    return deaths, births


def removal_intensities(profile: np.ndarray, removal_row: np.ndarray, site: int) -> np.ndarray:
    """r(·, γ∖x) over the site x and the vacant sites of γ; other entries 0."""
    r = np.array(removal_row, dtype=float)
    r[site] = profile[site]
    return r


def kawasaki_event_rates(
    profile: np.ndarray, removal: np.ndarray, configuration: Configuration, family: RateFamily, weights: np.ndarray
) -> np.ndarray:
    """Matrix of hop rates 2 c(x, y, γ∖x) ν_y, rows over occupied x, columns over vacant y."""
    occ = list(configuration.occupied)
    vac = list(configuration.vacant())
    rates = np.zeros((len(occ), len(vac)))
    if not occ or not vac:
        return rates
    for k, x in enumerate(occ):
        c = family.hop_matrix(removal_intensities(profile, removal[k], x))
        rates[k] = 2.0 * c[x, vac] * weights[vac]
    return check_ceiling(rates, family.ceiling)


def tracker_event_rates(tracker: IntensityTracker, family: RateFamily, weights: np.ndarray):
    if family.kind == "glauber":
        return glauber_event_rates(tracker.values, tracker.configuration, family, weights)
    return kawasaki_event_rates(tracker.values, tracker.removal(), tracker.configuration, family, weights)


def balance_residual(interaction: InteractionOperator, configuration: Configuration, family: RateFamily) -> float:
    """max over vacant pairs (x, y) of |r(x,γ) c(x,y,γ) - r(y,γ) c(y,x,γ)|.

    Pairs involving an occupied site are covered too: a hop out of γ only ever
    sees γ∖x, and balance on that configuration is the vacant-pair check for γ∖x.
    """
    profile = intensity_profile(interaction, configuration, family.threshold).values
    vac = list(configuration.vacant())
    if len(vac) < 2:
        return 0.0
    r = np.zeros_like(profile)
    r[vac] = profile[vac]
    c = family.hop_matrix(r)
    flux = r[:, None] * c
    sub = np.ix_(vac, vac)
    return float(np.max(np.abs(flux - flux.T)[sub]))


def _grid_spacing(space: SiteSpace) -> np.ndarray:
    return np.abs(space.differences())


def all_pairs_mobility(n: int, value: float = 1.0) -> np.ndarray:
    a = np.full((n, n), float(value))
    np.fill_diagonal(a, 0.0)
    return a


def nearest_neighbour_mobility(n: int, value: float = 1.0, periodic: bool = False) -> np.ndarray:
    a = np.zeros((n, n))
    idx = np.arange(n - 1)
    a[idx, idx + 1] = value
    a[idx + 1, idx] = value
    if periodic and n > 2:
        a[0, n - 1] = a[n - 1, 0] = value
    return a


def gaussian_mobility(space: SiteSpace, lengthscale: float = 1.0, value: float = 1.0) -> np.ndarray:
    if lengthscale <= 0.0:
        raise ValueError(f"gaussian mobility needs a positive lengthscale, got {lengthscale}")
    a = value * np.exp(-0.5 * (_grid_spacing(space) / lengthscale) ** 2)
    np.fill_diagonal(a, 0.0)
    return a


def perturb_mobility(a: np.ndarray, x: int, y: int, delta: float) -> np.ndarray:
    """Copy of ``a`` with a_xy shifted by delta only (a_yx untouched)."""
    out = np.array(a, dtype=float)
    out[x, y] += delta
    return out


@dataclass
class MobilitySpec:
    type: str = "all_pairs"
    params: Dict[str, Any] = field(default_factory=dict)

    def build(self, space: SiteSpace) -> np.ndarray:
        p = self.params
        value = float(p.get("value", 1.0))
        if self.type == "all_pairs":
            a = all_pairs_mobility(space.n, value)
        elif self.type == "nearest_neighbour":
            a = nearest_neighbour_mobility(space.n, value, bool(p.get("periodic", False)))
        elif self.type == "gaussian":
            a = gaussian_mobility(space, float(p.get("lengthscale", 1.0)), value)
        elif self.type == "matrix":
            a = np.asarray(p.get("matrix"), dtype=float)
        else:
            raise ValueError(f"Unknown mobility type '{self.type}'. Expected one of {', '.join(MOBILITY_TYPES)}")
        for x, y, delta in p.get("perturb", []):
            a = perturb_mobility(a, int(x), int(y), float(delta))
        return a


def family_rates_on(interaction: InteractionOperator, configuration: Configuration, family: RateFamily, weights: np.ndarray):
    """Event rates of one configuration computed from scratch."""
    profile = intensity_profile(interaction, configuration, family.threshold).values
    if family.kind == "glauber":
        return glauber_event_rates(profile, configuration, family, weights)
    removal = removal_profiles(interaction, configuration, family.threshold)
    return kawasaki_event_rates(profile, removal, configuration, family, weights)
