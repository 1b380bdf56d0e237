from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from dynamics.generator import DENSE_MAX
from dynamics.rates import DYNAMICS_KINDS, MOBILITY_TYPES, RATE_CEILING, RATE_FORMS, MobilitySpec, RateFamily
from intensity.papangelou import ZERO_THRESHOLD
from kernel.kernel_builder import DEFAULT_EPSILON, KERNEL_TYPES, KernelSpec
from kernel.site_space import SiteSpace, make_grid_space
from measure.dpp import DEFAULT_ENUMERATION_LIMIT
from simulation.gillespie import INITIAL_RULES, SimConfig
from utils.errors import ConfigValidationError
from utils.io_helpers import read_config

COMMANDS = ("sample", "simulate", "verify", "spectrum", "correlations", "diagnose")
SECTIONS = ("space", "kernel", "family", "run", "limits", "verify")


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = raw.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigValidationError(name, "must be an object")
    return value


def _number(section: Dict[str, Any], key: str, path: str, default: Any = None, integer: bool = False) -> Any:
    value = section.get(key, default)
    if value is None:
        raise ConfigValidationError(f"{path}.{key}", "is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(f"{path}.{key}", f"must be a number, got {value!r}")
    if not math.isfinite(float(value)):
        raise ConfigValidationError(f"{path}.{key}", "must be finite")
    if integer:
        if int(value) != value:
            raise ConfigValidationError(f"{path}.{key}", f"must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _choice(section: Dict[str, Any], key: str, path: str, options: Tuple[str, ...], default: str | None = None) -> str:
    value = section.get(key, default)
    if value not in options:
        raise ConfigValidationError(f"{path}.{key}", f"must be one of {', '.join(options)}, got {value!r}")
    return value


@dataclass
class SpaceConfig:
    interval: Tuple[float, float] = (0.0, 1.0)
    n: int = 4
    weights: Any = "uniform"

    def build(self) -> SiteSpace:
        if isinstance(self.weights, str):
            return make_grid_space(self.interval, self.n, self.weights)
        grid = make_grid_space(self.interval, self.n)
        return SiteSpace(grid.positions, np.asarray(self.weights, dtype=float))


@dataclass
class KernelConfig:
    type: str
    params: Dict[str, Any] = field(default_factory=dict)
    epsilon: float = DEFAULT_EPSILON
    rescale: bool = True

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec(self.type, dict(self.params))


@dataclass
class FamilyConfig:
    kind: str = "glauber"
    s: float = 1.0
    mobility: Optional[MobilitySpec] = None
    form: str = "power"
    symmetrize: bool = False
    scale: float = 1.0

    def build(self, space: SiteSpace, threshold: float = ZERO_THRESHOLD, ceiling: float = RATE_CEILING) -> RateFamily:
        mobility = self.mobility.build(space) if self.mobility is not None else None
        return RateFamily(
            kind=self.kind,
            s=self.s,
            mobility=mobility,
            form=self.form,
            symmetrize=self.symmetrize,
            scale=self.scale,
            threshold=threshold,
            ceiling=ceiling,
        )


@dataclass
class RunConfig:
    T: float = 100.0
    burn_in: float = 0.1
    replicas: int = 1
    seed: int = 0
    initial: str = "dpp_sample"
    initial_sites: Tuple[int, ...] = ()
    draws: int = 10000
    snapshot_time: Optional[float] = 1.0
    snapshot_draws: int = 500


@dataclass
class LimitsConfig:
    enumeration_max: int = DEFAULT_ENUMERATION_LIMIT
    dense_max: int = DENSE_MAX


@dataclass
class VerifyConfig:
    mecke_functions: int = 50
    duality_pairs: int = 100
    bound_triples: int = 1000
    stationarity: bool = False
    tolerances: Dict[str, float] = field(
        default_factory=lambda: {
            "normalization": 1e-10,
            "mecke": 1e-10,
            "bound": 1e-9,
            "exactness": 1e-9,
            "balance": 1e-10,
            "reversibility": 1e-10,
            "duality": 1e-10,
            "conservativity": 1e-12,
            "inverse_map": 1e-9,
            "marginals": 1e-9,
            "idempotence": 1e-12,
        }
    )


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the parsed JSON for digests."""

    space: SpaceConfig
    kernel: KernelConfig
    family: FamilyConfig
    run: RunConfig
    limits: LimitsConfig
    verify: VerifyConfig
    raw: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        try:
            raw = read_config(Path(path))
        except (OSError, ValueError) as exc:
            raise ConfigValidationError("config", f"cannot read {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigValidationError("config", "top level must be an object")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        unknown = sorted(set(raw) - set(SECTIONS))
        if unknown:
            raise ConfigValidationError(unknown[0], "unknown section")
        cfg = cls(
            space=_parse_space(_section(raw, "space")),
            kernel=_parse_kernel(_section(raw, "kernel")),
            family=_parse_family(_section(raw, "family")),
            run=_parse_run(_section(raw, "run")),
            limits=_parse_limits(_section(raw, "limits")),
            verify=_parse_verify(_section(raw, "verify")),
            raw=raw,
        )
        cfg._cross_check()
        return cfg

    def _cross_check(self) -> None:
        n = self.space.n
        sites = self.run.initial_sites
        if any(i < 0 or i >= n for i in sites) or len(set(sites)) != len(sites):
            raise ConfigValidationError("run.initial_sites", f"must be distinct indices in [0, {n})")
        if self.run.initial == "given" and "initial_sites" not in self.raw.get("run", {}):
            raise ConfigValidationError("run.initial_sites", "is required when run.initial is given")
        mob = self.family.mobility
        if mob is not None and mob.type == "matrix" and np.asarray(mob.params["matrix"]).shape != (n, n):
            raise ConfigValidationError("family.mobility.matrix", f"must be {n}x{n}")
        for x, y, _ in mob.params.get("perturb", []) if mob is not None else []:
            if not (0 <= int(x) < n and 0 <= int(y) < n):
                raise ConfigValidationError("family.mobility.perturb", f"site indices must lie in [0, {n})")

    def sim_config(self, family: RateFamily, check_interval: int = 1000, drift_tolerance: float = 1e-8) -> SimConfig:
        return SimConfig(
            family=family,
            horizon=self.run.T,
            burn_in=self.run.burn_in,
            replicas=self.run.replicas,
            seed=self.run.seed,
            initial=self.run.initial,
            initial_sites=self.run.initial_sites,
            check_interval=check_interval,
            drift_tolerance=drift_tolerance,
        )


def _parse_space(sec: Dict[str, Any]) -> SpaceConfig:
    interval = sec.get("interval", [0.0, 1.0])
    if not isinstance(interval, (list, tuple)) or len(interval) != 2:
        raise ConfigValidationError("space.interval", "must be [lo, hi]")
    lo, hi = (float(v) for v in interval)
    if not lo < hi:
        raise ConfigValidationError("space.interval", f"lo must be below hi, got {interval}")
    n = _number(sec, "n", "space", integer=True)
    if n < 1:
        raise ConfigValidationError("space.n", f"must be >= 1, got {n}")
    weights = sec.get("weights", "uniform")
    if isinstance(weights, str):
        if weights not in ("uniform", "midpoint"):
            raise ConfigValidationError("space.weights", f"unknown weight rule {weights!r}")
    else:
        arr = np.asarray(weights, dtype=float)
        if arr.shape != (n,) or np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ConfigValidationError("space.weights", f"must be {n} positive numbers")
        weights = arr.tolist()
    return SpaceConfig((lo, hi), n, weights)


def _parse_kernel(sec: Dict[str, Any]) -> KernelConfig:
    kind = _choice(sec, "type", "kernel", KERNEL_TYPES)
    params = sec.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigValidationError("kernel.params", "must be an object")
    epsilon = _number(sec, "epsilon", "kernel", DEFAULT_EPSILON)
    if not 0.0 < epsilon < 1.0:
        raise ConfigValidationError("kernel.epsilon", f"must lie in (0, 1), got {epsilon}")
    rescale = sec.get("rescale", True)
    if not isinstance(rescale, bool):
        raise ConfigValidationError("kernel.rescale", "must be true or false")
    return KernelConfig(kind, params, epsilon, rescale)


def _parse_mobility(value: Any) -> Optional[MobilitySpec]:
    if value is None:
        return None
    if isinstance(value, str):
        value = {"type": value}
    if isinstance(value, list):
        value = {"type": "matrix", "matrix": value}
    if not isinstance(value, dict):
        raise ConfigValidationError("family.mobility", "must be a type name, a matrix or an object")
    mtype = _choice(value, "type", "family.mobility", MOBILITY_TYPES, "all_pairs")
    params = {k: v for k, v in value.items() if k != "type"}
    if mtype == "matrix":
        m = np.asarray(params.get("matrix"), dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigValidationError("family.mobility.matrix", "must be a square matrix")
        if np.any(m < 0.0) or not np.all(np.isfinite(m)):
            raise ConfigValidationError("family.mobility.matrix", "entries must be nonnegative and finite")
    for entry in params.get("perturb", []):
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise ConfigValidationError("family.mobility.perturb", "entries must be [x, y, delta]")
    return MobilitySpec(mtype, params)


def _parse_family(sec: Dict[str, Any]) -> FamilyConfig:
    kind = _choice(sec, "kind", "family", DYNAMICS_KINDS, "glauber")
    s = _number(sec, "s", "family", 1.0)
    if not 0.0 <= s <= 1.0:
        raise ConfigValidationError("family.s", f"must lie in [0, 1], got {s}")
    form = _choice(sec, "form", "family", RATE_FORMS, "power")
    scale = _number(sec, "scale", "family", 1.0)
    if scale < 0.0:
        raise ConfigValidationError("family.scale", f"must be nonnegative, got {scale}")
    symmetrize = sec.get("symmetrize", False)
    if not isinstance(symmetrize, bool):
        raise ConfigValidationError("family.symmetrize", "must be true or false")
    mobility = _parse_mobility(sec.get("mobility", "all_pairs" if kind == "kawasaki" else None))
    if kind == "kawasaki" and mobility is None:
        raise ConfigValidationError("family.mobility", "is required for Kawasaki dynamics")
    return FamilyConfig(kind, s, mobility, form, symmetrize, scale)


def _parse_run(sec: Dict[str, Any]) -> RunConfig:
    defaults = RunConfig()
    horizon = _number(sec, "T", "run", defaults.T)
    if horizon <= 0.0:
        raise ConfigValidationError("run.T", f"must be positive, got {horizon}")
    burn_in = _number(sec, "burn_in", "run", defaults.burn_in)
    if not 0.0 <= burn_in < 1.0:
        raise ConfigValidationError("run.burn_in", f"must lie in [0, 1), got {burn_in}")
    replicas = _number(sec, "replicas", "run", defaults.replicas, integer=True)
    if replicas < 1:
        raise ConfigValidationError("run.replicas", f"must be >= 1, got {replicas}")
    seed = _number(sec, "seed", "run", defaults.seed, integer=True)
    if seed < 0:
        raise ConfigValidationError("run.seed", f"must be a nonnegative integer, got {seed}")
    initial = _choice(sec, "initial", "run", INITIAL_RULES, defaults.initial)
    sites = sec.get("initial_sites", [])
    if not isinstance(sites, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in sites):
        raise ConfigValidationError("run.initial_sites", "must be a list of site indices")
    draws = _number(sec, "draws", "run", defaults.draws, integer=True)
    if draws < 1:
        raise ConfigValidationError("run.draws", f"must be >= 1, got {draws}")
    snapshot_time = sec.get("snapshot_time", defaults.snapshot_time)
    if snapshot_time is not None:
        snapshot_time = _number(sec, "snapshot_time", "run")
        if snapshot_time < 0.0:
            raise ConfigValidationError("run.snapshot_time", "must be nonnegative")
    snapshot_draws = _number(sec, "snapshot_draws", "run", defaults.snapshot_draws, integer=True)
    if snapshot_draws < 0:
        raise ConfigValidationError("run.snapshot_draws", "must be nonnegative")
    return RunConfig(horizon, burn_in, replicas, seed, initial, tuple(sites), draws, snapshot_time, snapshot_draws)


def _parse_limits(sec: Dict[str, Any]) -> LimitsConfig:
    enum_max = _number(sec, "enumeration_max", "limits", DEFAULT_ENUMERATION_LIMIT, integer=True)
    dense_max = _number(sec, "dense_max", "limits", DENSE_MAX, integer=True)
    if enum_max < 1:
        raise ConfigValidationError("limits.enumeration_max", "must be >= 1")
    if dense_max < 1:
        raise ConfigValidationError("limits.dense_max", "must be >= 1")
    return LimitsConfig(enum_max, dense_max)


def _parse_verify(sec: Dict[str, Any]) -> VerifyConfig:
    cfg = VerifyConfig()
    cfg.mecke_functions = _number(sec, "mecke_functions", "verify", cfg.mecke_functions, integer=True)
    cfg.duality_pairs = _number(sec, "duality_pairs", "verify", cfg.duality_pairs, integer=True)
    cfg.bound_triples = _number(sec, "bound_triples", "verify", cfg.bound_triples, integer=True)
    stationarity = sec.get("stationarity", False)
    if not isinstance(stationarity, bool):
        raise ConfigValidationError("verify.stationarity", "must be true or false")
    cfg.stationarity = stationarity
    tolerances = sec.get("tolerances", {}) or {}
    if not isinstance(tolerances, dict):
        raise ConfigValidationError("verify.tolerances", "must be an object")
    for key in tolerances:
        if key not in cfg.tolerances:
            raise ConfigValidationError(f"verify.tolerances.{key}", "unknown tolerance")
        value = _number(tolerances, key, "verify.tolerances")
        if value <= 0.0:
            raise ConfigValidationError(f"verify.tolerances.{key}", "must be positive")
        cfg.tolerances[key] = value
    return cfg


def validate_command(command: str) -> Tuple[bool, Optional[str]]:
    if command not in COMMANDS:
        return False, f"Unknown command '{command}'. Expected one of {', '.join(COMMANDS)}"
    return True, None
