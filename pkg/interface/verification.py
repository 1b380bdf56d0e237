from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from dynamics.dirichlet import form_duality, form_edges
from dynamics.generator import build_generator, conservativity_residual, reversibility_check, structure_violations
from dynamics.rates import RateFamily, balance_residual, symmetrize
from intensity.factorization import IncrementalCholesky
from intensity.papangelou import intensity, intensity_profile, intensity_table, naive_intensity
from kernel.interaction import InteractionOperator, correlation_kernel
from kernel.kernel_builder import KernelOperator, validate_kernel
from kernel.site_space import SiteSpace
from measure.configuration import Configuration
from measure.correlation import density_ratio_residual, marginal_residual, mecke_check
from measure.dpp import MeasureTable
from measure.sampler import replica_rng
from simulation.gillespie import SimConfig
from simulation.stationarity import stationarity_test

logger = logging.getLogger(__name__)

# stream index of the verification generator, away from the replica streams
VERIFY_STREAM = 1 << 30


@dataclass
class CheckResult:
    name: str
    value: Optional[float]
    tolerance: Optional[float]
    passed: bool
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "detail": self.detail,
        }


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def add(self, name: str, value: Optional[float], tolerance: Optional[float], passed: bool | None = None, detail: str = "") -> CheckResult:
        if passed is None:
            passed = value is not None and bool(np.isfinite(value)) and value <= tolerance
        check = CheckResult(name, value, tolerance, bool(passed), detail)
        self.checks.append(check)
        log = logger.info if check.passed else logger.error
        log("%-24s %s (value %s, tolerance %s)", name, "pass" if check.passed else "FAIL", value, tolerance)
        return check

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "failures": self.failures, "checks": [c.to_dict() for c in self.checks]}


class InvariantSuite:
    """Runs every identity the finite-volume model must satisfy against one experiment."""

    def __init__(
        self,
        kernel: KernelOperator,
        interaction: InteractionOperator,
        space: SiteSpace,
        family: RateFamily,
        table: MeasureTable,
        tolerances: Dict[str, float],
        seed: int = 0,
    ):
        self.kernel = kernel
        self.interaction = interaction
        self.space = space
        self.family = family
        self.table = table
        self.tol = tolerances
        self.rng = replica_rng(seed, VERIFY_STREAM)
        self.report = VerificationReport()

    def run(
        self,
        mecke_functions: int = 50,
        duality_pairs: int = 100,
        bound_triples: int = 1000,
        sim_config: SimConfig | None = None,
        snapshot_time: float | None = None,
        snapshot_draws: int = 0,
    ) -> VerificationReport:
        self.check_kernel()
        self.check_measure()
        self.check_mecke(mecke_functions)
        self.check_intensity(bound_triples)
        self.check_balance()
        self.check_generator(duality_pairs)
        if sim_config is not None:
            self.check_stationarity(sim_config, snapshot_time, snapshot_draws)
        return self.report

    def check_kernel(self) -> None:
        diag = validate_kernel(self.kernel)
        self.report.add("kernel_admissible", float(len(diag.violations)), 0.0, diag.ok, "; ".join(diag.violations))
        back = correlation_kernel(self.interaction).matrix
        self.report.add("inverse_map", float(np.max(np.abs(back - self.kernel.matrix))), self.tol["inverse_map"])

    def check_measure(self) -> None:
        self.report.add("normalization", self.table.normalization_error, self.tol["normalization"])
        self.report.add("marginals", marginal_residual(self.table, self.kernel), self.tol["marginals"])

    def check_mecke(self, functions: int) -> None:
        n = self.space.n
        r = intensity_table(self.interaction, self.family.threshold)
        worst = 0.0
        for _ in range(functions):
            f = self.rng.uniform(-1.0, 1.0, size=(n, 1 << n))
            worst = max(worst, mecke_check(self.interaction, self.space, f, self.table, r).residual)
        self.report.add("mecke", worst, self.tol["mecke"], detail=f"{functions} random bounded test functions")
        self.report.add("density_ratio", density_ratio_residual(self.table, self.space, r), self.tol["mecke"])

    def check_intensity(self, triples: int) -> None:
        n = self.space.n
        j = self.interaction.matrix
        bound = -np.inf
        exact = 0.0
        for _ in range(triples):
            x = int(self.rng.integers(n))
            others = np.array([i for i in range(n) if i != x], dtype=int)
            keep = self.rng.random(others.size) < 0.5
            config = Configuration(n, tuple(others[keep].tolist()))
            value = intensity(self.interaction, config, x, self.family.threshold)
            bound = max(bound, value - j[x, x])
            if IncrementalCholesky.from_indices(j, config.occupied).singular:
                continue
            naive = naive_intensity(self.interaction, config, x)
            if naive > self.family.threshold:
                exact = max(exact, abs(value - naive) / max(1.0, abs(naive)))
        # profiles must reproduce the per-site values
        config = Configuration.from_bitmask(int(self.rng.integers(1 << n)), n)
        profile = intensity_profile(self.interaction, config, self.family.threshold).values
        for x in config.vacant():
            exact = max(exact, abs(profile[x] - intensity(self.interaction, config, x, self.family.threshold)))
        self.report.add("papangelou_bound", float(bound), self.tol["bound"], passed=bound <= self.tol["bound"])
        self.report.add("papangelou_exactness", exact, self.tol["exactness"], detail=f"{triples} random triples")

    def check_balance(self) -> None:
        if self.family.kind != "kawasaki":
            self.report.add("balance", None, None, passed=True, detail="not applicable to Glauber dynamics")
            return
        n = self.space.n
        worst = 0.0
        idem = 0.0
        for mask in range(1 << n):
            config = Configuration.from_bitmask(mask, n)
            worst = max(worst, balance_residual(self.interaction, config, self.family))
            profile = intensity_profile(self.interaction, config, self.family.threshold).values
            r = np.where(config.indicator(), 0.0, profile)
            c = self.family.raw_hop_matrix(r)
            once = symmetrize(c, c.T, r[:, None], r[None, :], self.family.threshold)
            twice = symmetrize(once, once.T, r[:, None], r[None, :], self.family.threshold)
            scale = max(1.0, float(np.max(np.abs(once)))) if once.size else 1.0
            idem = max(idem, float(np.max(np.abs(twice - once))) / scale)
        detail = "" if worst <= self.tol["balance"] else "detailed balance r(x)c(x,y) = r(y)c(y,x) violated"
        self.report.add("balance", worst, self.tol["balance"], detail=detail)
        self.report.add("symmetrize_idempotence", idem, self.tol["idempotence"])

    def check_generator(self, pairs: int) -> None:
        q = build_generator(self.interaction, self.space, self.family, limit=self.table.n_sites)
        self.report.add("conservativity", conservativity_residual(q), self.tol["conservativity"])
        bad = structure_violations(q)
        self.report.add("structure", float(bad), 0.0, passed=bad == 0)
        self.report.add("reversibility", reversibility_check(q, self.table), self.tol["reversibility"])

        edges = form_edges(self.interaction, self.space, self.table, self.family)
        size = 1 << self.space.n
        duality = 0.0
        min_energy = np.inf
        for _ in range(pairs):
            f = self.rng.standard_normal(size)
            g = self.rng.standard_normal(size)
            res = form_duality(self.interaction, self.space, self.family, self.table, f, g, q=q, edges=edges)
            duality = max(duality, res.residual / max(1.0, abs(res.form)))
            min_energy = min(min_energy, edges.evaluate(f, f))
        self.report.add("form_duality", duality, self.tol["duality"], detail=f"{pairs} random pairs")
        if pairs:
            self.report.add("form_positivity", float(min_energy), 0.0, passed=min_energy >= -self.tol["duality"])

    def check_stationarity(self, sim_config: SimConfig, snapshot_time: float | None, snapshot_draws: int) -> None:
        result = stationarity_test(
            sim_config,
            self.interaction,
            self.space,
            self.table,
            snapshot_time=snapshot_time,
            snapshot_draws=snapshot_draws,
        )
        self.report.add("stationarity", result.tv, result.tv_tolerance, passed=result.passed, detail=result.status)
