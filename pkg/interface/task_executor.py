from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from rich.progress import track

from dynamics.diagnostics import condition_diagnostics
from dynamics.generator import build_generator
from dynamics.rates import RateFamily
from dynamics.spectrum import spectral_analysis
from intensity.papangelou import intensity_frame
from interface.config_schema import ExperimentConfig, validate_command
from interface.verification import InvariantSuite
from kernel.interaction import InteractionOperator, interaction_operator
from kernel.kernel_builder import KernelBuilder, KernelOperator, validate_kernel
from kernel.site_space import SiteSpace
from measure.cache_manager import MeasureCache
from measure.correlation import correlation_table, fraction_within
from measure.dpp import MeasureTable, exact_distribution, total_variation
from measure.sampler import SpectralSampler, replica_rng, summarize_draws
from simulation.gillespie import simulate_replicas
from simulation.statistics import (
    merge_occupancy,
    occupancy_stats,
    occupancy_z_scores,
    particle_number_conserved,
    pooled_time_in_state,
)
from utils.errors import ConfigValidationError, NonReversibleError, NumericalAbort
from utils.io_helpers import config_digest, read_config, setup_logging, write_csv, write_json, write_matrix_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2
EXIT_NUMERICAL = 3
SIGMA_CRITERION = 3.0


@dataclass
class ExecutionResult:
    ok: bool
    message: str
    exit_code: int = EXIT_OK
    artifacts: Dict[str, Path] = field(default_factory=dict)


@dataclass
class RunManifest:
    """Provenance of one command run; ``created_at`` is the only run-dependent field."""

    command: str
    config_digest: str
    seed: int
    version: str
    outputs: Dict[str, Path] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "version": self.version,
            "created_at": self.created_at,
            "exit_code": self.exit_code,
            "outputs": {k: str(v) for k, v in sorted(self.outputs.items())},
        }


@dataclass
class Experiment:
    config: ExperimentConfig
    space: SiteSpace
    kernel: KernelOperator
    interaction: InteractionOperator
    family: RateFamily


class TaskExecutor:
    def __init__(self, config_path: Path = Path("config/settings.yaml")):
        self.settings: Dict[str, Any] = read_config(config_path) if Path(config_path).exists() else {}
        log_cfg = self.settings.get("logging", {})
        setup_logging(log_cfg.get("level", "INFO"), log_cfg.get("file"))
        self.numerics: Dict[str, Any] = self.settings.get("numerics", {})
        self.version = str(self.settings.get("version", "0"))
        self.scheduler = self.settings.get("parallel", {}).get("scheduler", "threads")
        cache_cfg = self.settings.get("cache", {})
        self.cache: Optional[MeasureCache] = None
        if cache_cfg.get("enabled", False):
            self.cache = MeasureCache(Path(cache_cfg.get("directory", "./cache")))

    def output_directory(self, out: Optional[Path]) -> Path:
        if out is not None:
            return Path(out)
        out_cfg = self.settings.get("output", {})
        env = os.environ.get(out_cfg.get("env_var", "DPPDYN_OUTPUT_DIR"))
        return Path(env) if env else Path(out_cfg.get("directory", "./outputs"))

    def execute(
        self,
        command: str,
        config_path: Path,
        seed: Optional[int] = None,
        out: Optional[Path] = None,
        replicas: Optional[int] = None,
    ) -> ExecutionResult:
        ok, err = validate_command(command)
        if not ok:
            return ExecutionResult(False, err or "", EXIT_VALIDATION)
        try:
            cfg = ExperimentConfig.from_file(config_path)
            if seed is not None:
                if seed < 0 or seed >= 1 << 64:
                    raise ConfigValidationError("run.seed", f"must be an unsigned 64-bit integer, got {seed}")
                cfg.run.seed = int(seed)
            if replicas is not None:
                if replicas < 1:
                    raise ConfigValidationError("run.replicas", f"must be >= 1, got {replicas}")
                cfg.run.replicas = int(replicas)
            experiment = self._build(cfg)
        except NumericalAbort as e:
            logger.error("Numerical abort while building the experiment: %s", e)
            return ExecutionResult(False, f"Numerical abort: {e}", EXIT_NUMERICAL)
        except ValueError as e:
            logger.error("Invalid configuration: %s", e)
            return ExecutionResult(False, f"Invalid configuration: {e}", EXIT_VALIDATION)

        out_dir = self.output_directory(out)
        manifest = RunManifest(command, config_digest(cfg.raw), cfg.run.seed, self.version)
        try:
            handler = getattr(self, f"_run_{command}")
            result: ExecutionResult = handler(experiment, out_dir)
        except NumericalAbort as e:
            logger.error("Numerical abort: %s", e)
            result = ExecutionResult(False, f"Numerical abort: {e}", EXIT_NUMERICAL)
        except NonReversibleError as e:
            logger.error("%s", e)
            result = ExecutionResult(False, str(e), EXIT_INVARIANT)
        except ValueError as e:
            logger.error("Invalid request: %s", e)
            result = ExecutionResult(False, f"Invalid request: {e}", EXIT_VALIDATION)
        except Exception as e:  # noqa: BLE001
            logger.exception("Error executing %s", command)
            result = ExecutionResult(False, f"Error: {e}", EXIT_NUMERICAL)

        manifest.outputs = dict(result.artifacts)
        manifest.exit_code = result.exit_code
        result.artifacts["manifest"] = write_json(manifest.to_dict(), out_dir / "manifest.json")
        return result

    def _build(self, cfg: ExperimentConfig) -> Experiment:
        space = cfg.space.build()
        builder = KernelBuilder(epsilon=cfg.kernel.epsilon, rescale=cfg.kernel.rescale)
        try:
            kernel = builder.build(space, cfg.kernel.spec)
        except NumericalAbort:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigValidationError("kernel.params", str(e)) from e
        interaction = interaction_operator(kernel)
        try:
            family = cfg.family.build(
                space,
                threshold=float(self.numerics.get("zero_threshold", 1e-12)),
                ceiling=float(self.numerics.get("rate_ceiling", 1e12)),
            )
        except ValueError as e:
            raise ConfigValidationError("family", str(e)) from e
        if family.mobility is not None and family.mobility.shape != (space.n, space.n):
            raise ConfigValidationError("family.mobility", f"must be {space.n}x{space.n}")
        return Experiment(cfg, space, kernel, interaction, family)

    def _limit(self, experiment: Experiment) -> int:
        if "limits" in experiment.config.raw:
            return experiment.config.limits.enumeration_max
        return int(self.numerics.get("enumeration_max", experiment.config.limits.enumeration_max))

    def _dense_max(self, experiment: Experiment) -> int:
        if "limits" in experiment.config.raw:
            return experiment.config.limits.dense_max
        return int(self.numerics.get("dense_max", experiment.config.limits.dense_max))

    def _measure(self, experiment: Experiment) -> MeasureTable:
        limit = self._limit(experiment)
        if self.cache is not None:
            return self.cache.get_or_compute(experiment.interaction, limit)
        return exact_distribution(experiment.interaction, experiment.space, limit)

    def _run_sample(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        cfg = experiment.config
        n = experiment.space.n
        rng = replica_rng(cfg.run.seed, 0)
        draws = SpectralSampler(experiment.kernel).sample_many(cfg.run.draws, rng)
        frame = pd.DataFrame(draws.astype(np.int8), columns=[f"site_{i}" for i in range(n)])
        artifacts = {"samples": write_csv(frame, out_dir / "samples.csv")}
        limit = self._limit(experiment)
        table = self._measure(experiment) if n <= limit else None
        if table is not None:
            artifacts["measure"] = write_csv(table.to_frame(), out_dir / "measure.csv")
        summary = summarize_draws(draws, experiment.kernel, table, limit)
        artifacts["summary"] = write_json(summary, out_dir / "sample_summary.json")
        return ExecutionResult(True, f"Wrote {cfg.run.draws} draws on {n} sites", EXIT_OK, artifacts)

    def _run_simulate(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        cfg = experiment.config
        sim = cfg.sim_config(
            experiment.family,
            check_interval=int(self.numerics.get("check_interval", 1000)),
            drift_tolerance=float(self.numerics.get("drift_tolerance", 1e-8)),
        )
        trajectories = simulate_replicas(sim, experiment.interaction, experiment.space, scheduler=self.scheduler)
        artifacts: Dict[str, Path] = {}
        for traj in track(trajectories, description="Writing trajectories"):
            artifacts[f"trajectory_{traj.replica}"] = write_csv(traj.to_frame(), out_dir / f"trajectory_{traj.replica}.csv")
        merged = merge_occupancy([occupancy_stats(t, sim.burn_in) for t in trajectories])
        artifacts["occupancy"] = write_csv(merged.to_frame(), out_dir / "occupancy.csv")

        report: Dict[str, Any] = {
            "kind": sim.kind,
            "replicas": sim.replicas,
            "horizon": sim.horizon,
            "burn_in": sim.burn_in,
            "events": [len(t.events) for t in trajectories],
            "absorbed": [t.absorbed_at for t in trajectories],
            "refactorizations": [t.refactorizations for t in trajectories],
            "mean": merged.mean,
            "stderr": merged.stderr,
        }
        if sim.kind == "kawasaki":
            report["particle_number_conserved"] = particle_number_conserved(trajectories)
        if experiment.space.n <= self._limit(experiment):
            table = self._measure(experiment)
            report["marginals"] = table.marginals()
            report["z_scores"] = occupancy_z_scores(merged, report["marginals"])
            if sim.kind == "glauber":
                law = pooled_time_in_state(trajectories, sim.burn_in)
                report["tv_to_exact"] = total_variation(law, table.probabilities)
        artifacts["stats"] = write_json(report, out_dir / "simulation_stats.json")
        return ExecutionResult(True, f"Simulated {sim.replicas} replica(s) of {sim.kind} dynamics", EXIT_OK, artifacts)

    def _run_verify(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        cfg = experiment.config
        table = self._measure(experiment)
        suite = InvariantSuite(
            experiment.kernel,
            experiment.interaction,
            experiment.space,
            experiment.family,
            table,
            cfg.verify.tolerances,
            seed=cfg.run.seed,
        )
        sim = None
        if cfg.verify.stationarity:
            sim = cfg.sim_config(
                experiment.family,
                check_interval=int(self.numerics.get("check_interval", 1000)),
                drift_tolerance=float(self.numerics.get("drift_tolerance", 1e-8)),
            )
        report = suite.run(
            mecke_functions=cfg.verify.mecke_functions,
            duality_pairs=cfg.verify.duality_pairs,
            bound_triples=cfg.verify.bound_triples,
            sim_config=sim,
            snapshot_time=cfg.run.snapshot_time,
            snapshot_draws=cfg.run.snapshot_draws,
        )
        artifacts = {"verify": write_json(report.to_dict(), out_dir / "verify.json")}
        if report.passed:
            return ExecutionResult(True, f"All {len(report.checks)} checks passed", EXIT_OK, artifacts)
        return ExecutionResult(False, "Failed checks: " + ", ".join(report.failures), EXIT_INVARIANT, artifacts)

    def _run_spectrum(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        cfg = experiment.config
        table = self._measure(experiment)
        q = build_generator(experiment.interaction, experiment.space, experiment.family, self._limit(experiment))
        artifacts = {"generator": write_csv(q.to_triplets(), out_dir / "generator_triplets.csv")}
        report = spectral_analysis(
            q,
            table,
            dense_max=self._dense_max(experiment),
            reversibility_tol=cfg.verify.tolerances["reversibility"],
        )
        artifacts["spectrum"] = write_json(report.to_dict(), out_dir / "spectrum.json")
        gap = report.gap if report.gap is not None else "none"
        return ExecutionResult(True, f"Spectral gap of the {q.kind} generator: {gap}", EXIT_OK, artifacts)

    def _run_correlations(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        cfg = experiment.config
        draws = SpectralSampler(experiment.kernel).sample_many(cfg.run.draws, replica_rng(cfg.run.seed, 0))
        artifacts: Dict[str, Path] = {}
        within: Dict[str, float] = {}
        for order in (1, 2):
            frame = correlation_table(draws, experiment.kernel, order)
            artifacts[f"k{order}"] = write_csv(frame, out_dir / f"correlations_k{order}.csv")
            within[f"k{order}"] = fraction_within(frame, SIGMA_CRITERION)
        summary = {"draws": cfg.run.draws, "fraction_within_3_stderr": within}
        artifacts["summary"] = write_json(summary, out_dir / "correlations_summary.json")
        return ExecutionResult(True, f"Correlation estimates from {cfg.run.draws} draws", EXIT_OK, artifacts)

    def _run_diagnose(self, experiment: Experiment, out_dir: Path) -> ExecutionResult:
        limit = self._limit(experiment)
        table = self._measure(experiment) if experiment.space.n <= limit else None
        report = condition_diagnostics(experiment.interaction, experiment.space, experiment.family, table, limit)
        payload = {
            "kernel": validate_kernel(experiment.kernel).to_dict(),
            "family": experiment.family.to_dict(),
            "conditions": report.to_dict(),
        }
        artifacts = {
            "diagnostics": write_json(payload, out_dir / "diagnostics.json"),
            "kernel": write_matrix_csv(experiment.kernel.matrix, out_dir / "kernel.csv"),
            "interaction": write_matrix_csv(experiment.interaction.matrix, out_dir / "interaction.csv"),
        }
        if table is not None:
            frame = intensity_frame(experiment.interaction, experiment.family.threshold)
            artifacts["intensities"] = write_csv(frame, out_dir / "intensity_profiles.csv")
        return ExecutionResult(True, "Condition diagnostics written", EXIT_OK, artifacts)
