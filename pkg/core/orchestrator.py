"""
Regret Lab Orchestrator
Runs the replicates of an experiment, evaluates the requested checks and hands every result to the exporter
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Set, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from config.settings import settings
from core.data_gen import replicate_seed, replicate_stream
from core.data_models import (
    AssumptionEstimates,
    BoundReport,
    CheckName,
    EnvelopeStats,
    ExperimentConfig,
    LearnerKind,
    MONTE_CARLO_CHECKS,
)
from core.exceptions import ConfigError, InsufficientDataError
from learners import make_learner
from learners.ftl_oracle import ftl_fit_arrays
from regret_lab import adversarial_checks, stochastic_checks
from regret_lab.monte_carlo import (
    MIN_DECAY_REPLICATES,
    MIN_REPLICATES,
    MonteCarloAccumulator,
    assumptions_check,
    decay_from_accumulator,
    estimates_from_accumulator,
    growth_from_accumulator,
    increments_from_accumulator,
    sample_steps,
    theorem2_from_accumulator,
    theorem3_rate_check,
    theorem4_from_accumulator,
)
from regret_lab.regret import expected_excess_losses, regret_curve
from regret_lab.trace import LearnerTrace, run_learner
from utils.helpers import grid_points, load_json_file
from utils.performance_monitor import PerformanceMonitor
from utils.result_exporter import SCHEMA_VERSION, ResultExporter, read_bound_reports, read_manifest

# Checks that need the replicate-level accumulator
ACCUMULATED_CHECKS = MONTE_CARLO_CHECKS - {CheckName.THEOREM3}
ESTIMATE_CHECKS = {CheckName.ASSUMPTIONS, CheckName.THEOREM2, CheckName.THEOREM4}
# Failing steps echoed per report in the manifest
MAX_FAILING_STEPS = 10

def validate_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Parse a config document, turning validation failures into ConfigError"""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid experiment config: {problems}") from e

def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read a JSON experiment config and apply command-line overrides

    Args:
        path: JSON document mirroring ExperimentConfig
        overrides: base_seed, jobs, allow_slow, sabotage, full_trace, output_dir; None values are ignored

    Returns:
        The validated config
    """
    data = load_json_file(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "full_trace":
            data.setdefault("output", {})["full_trace"] = value
        elif key == "output_dir":
            data.setdefault("output", {})["dir"] = str(value)
        else:
            data[key] = value
    return validate_config(data)

@dataclass
class ReplicateOutcome:
    """Everything one replicate produced, before aggregation"""
    replicate: int
    seed: int
    traces: List[LearnerTrace]
    reports: List[BoundReport]
    summary_rows: List[Dict[str, Any]]
    curve_rows: List[Dict[str, Any]]
    run_seconds: Dict[str, float]
    check_seconds: float
    seconds: float

@dataclass
class ExperimentResult:
    """Aggregated outcome of all replicates of one config"""
    config: ExperimentConfig
    seeds: List[int]
    summary_rows: List[Dict[str, Any]] = field(default_factory=list)
    curve_rows: List[Dict[str, Any]] = field(default_factory=list)
    reports: List[BoundReport] = field(default_factory=list)
    final_states: List[Dict[str, Any]] = field(default_factory=list)
    envelopes: Dict[str, EnvelopeStats] = field(default_factory=dict)
    estimates: Dict[str, AssumptionEstimates] = field(default_factory=dict)
    learner_means: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    performance: Dict[str, Any] = field(default_factory=dict)

    @property
    def verdict_reports(self) -> List[BoundReport]:
        return [report for report in self.reports if report.kind != "diagnostic"]

    @property
    def failed_reports(self) -> List[BoundReport]:
        return [report for report in self.verdict_reports if not report.satisfied]

    @property
    def passed(self) -> bool:
        return not self.failed_reports

class ExperimentOrchestrator:
    """Runs, verifies and sweeps one experiment config"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.monitor = PerformanceMonitor()
        self.theta_true = config.stream.theta_true_array()
        logger.info(
            f"Orchestrator ready: {config.stream.scheme.value} stream n={config.stream.n} d={config.stream.d}, "
            f"learners [{', '.join(spec.name for spec in config.learners)}], {config.replicates} replicates"
        )

    @property
    def jobs(self) -> int:
        return self.config.jobs or settings.default_jobs

    def requested_checks(self) -> Set[CheckName]:
        """Configured checks; a sabotaged run always includes the update identity"""
        checks = set(self.config.checks)
        if self.config.sabotage:
            checks.add(CheckName.UPDATE_IDENTITY)
        return checks

    def _check_replicate_budget(self, checks: Set[CheckName]) -> None:
        replicates = self.config.replicates
        if checks & ACCUMULATED_CHECKS and replicates < MIN_REPLICATES:
            listed = ", ".join(sorted(c.value for c in checks & ACCUMULATED_CHECKS))
            raise InsufficientDataError(f"[{listed}] need at least {MIN_REPLICATES} replicates, got {replicates}")
        if CheckName.DECAY in checks and replicates < MIN_DECAY_REPLICATES:
            raise InsufficientDataError(f"decay needs at least {MIN_DECAY_REPLICATES} replicates, got {replicates}")

    # --- per replicate --------------------------------------------------------

    def _trace_checks(self, trace: LearnerTrace, replicate: int, checks: Set[CheckName],
                      ftl_comparator: Callable[[float], np.ndarray]) -> List[BoundReport]:
        """Checks judged on a single trace"""
        reports: List[BoundReport] = []
        theta_true = self.theta_true
        localization = self.config.localization

        if trace.kind == LearnerKind.SOS:
            if CheckName.THEOREM1 in checks:
                comparators = {"zero": np.zeros(trace.d), "ftl": ftl_comparator(trace.p1)}
                if theta_true is not None:
                    comparators["theta_true"] = theta_true
                reports.extend(adversarial_checks.theorem1_check(trace, comparators, replicate))
            if CheckName.PROP2 in checks:
                reports.append(adversarial_checks.prop2_check(trace, replicate))
            if CheckName.LEMMA1 in checks:
                reports.append(adversarial_checks.lemma1_check(trace, replicate))

        if CheckName.UPDATE_IDENTITY in checks:
            report = adversarial_checks.update_identity_check(trace, replicate)
            if report is not None:
                reports.append(report)
        if trace.kind == LearnerKind.EKF and CheckName.EKF_CONSISTENCY in checks:
            reports.append(adversarial_checks.ekf_consistency_check(trace, replicate))

        if theta_true is None:
            return reports
        if CheckName.PROP3 in checks:
            reports.append(stochastic_checks.prop3_check(trace, theta_true, replicate))
        if CheckName.QUADRATIC_VARIATION in checks:
            reports.append(stochastic_checks.quadratic_variation_check(trace, theta_true, replicate))
        if CheckName.COROLLARY1 in checks:
            reports.append(stochastic_checks.corollary1_check(trace, theta_true, localization, replicate))
        if trace.kind == LearnerKind.EKF:
            if CheckName.LEMMA2 in checks:
                reports.append(stochastic_checks.lemma2_check(trace, theta_true, localization.epsilon, replicate))
            if CheckName.BOUNDCARDINAL in checks:
                reports.append(stochastic_checks.boundcardinal_check(trace, theta_true, localization, replicate))
            if CheckName.THEOREM3 in checks:
                reports.append(stochastic_checks.theorem3_check(trace, theta_true, localization, replicate))
        return reports

    def _run_replicate(self, replicate: int, checks: Set[CheckName]) -> ReplicateOutcome:
        started = time.perf_counter()
        config = self.config
        seed = replicate_seed(config.base_seed, replicate)
        stream = replicate_stream(config.stream, config.base_seed, replicate)
        steps = sample_steps(stream.n)

        ftl_cache: Dict[float, np.ndarray] = {}

        def ftl_comparator(p1: float) -> np.ndarray:
            if p1 not in ftl_cache:
                ftl_cache[p1] = ftl_fit_arrays(stream.features, stream.labels, p1)
            return ftl_cache[p1]

        outcome = ReplicateOutcome(
            replicate=replicate, seed=seed, traces=[], reports=[], summary_rows=[], curve_rows=[],
            run_seconds={}, check_seconds=0.0, seconds=0.0,
        )
        for spec in config.learners:
            learner = make_learner(spec, stream.d)
            run_started = time.perf_counter()
            trace = run_learner(learner, stream, sabotage=config.sabotage)
            outcome.run_seconds[spec.name] = time.perf_counter() - run_started
            outcome.traces.append(trace)

            if self.theta_true is not None:
                comparator_label, comparator = "theta_true", self.theta_true
                expected = np.cumsum(expected_excess_losses(trace, self.theta_true))
            else:
                comparator_label, comparator = "ftl", ftl_comparator(spec.p1)
                expected = None
            realized = regret_curve(trace, comparator)
            cumulative_loss = np.cumsum(trace.losses)
            envelope = trace.envelope

            outcome.summary_rows.append({
                "learner": spec.name,
                "kind": spec.kind.value,
                "replicate": replicate,
                "seed": seed,
                "n": trace.n,
                "d": trace.d,
                "p1": spec.p1,
                "comparator": comparator_label,
                "cumulative_loss": float(cumulative_loss[-1]),
                "regret": float(realized[-1]),
                "expected_regret": float(expected[-1]) if expected is not None else None,
                "d_x": envelope.d_x,
                "d_theta": envelope.d_theta,
                "d_margin": envelope.d_margin,
                "d_margin_cross": envelope.d_margin_cross,
                "theta_final_norm": float(np.linalg.norm(trace.thetas[-1])),
            })
            for t in steps:
                outcome.curve_rows.append({
                    "learner": spec.name,
                    "replicate": replicate,
                    "step": t,
                    "cumulative_loss": float(cumulative_loss[t - 1]),
                    "regret": float(realized[t - 1]),
                    "expected_regret": float(expected[t - 1]) if expected is not None else None,
                })

            if checks:
                check_started = time.perf_counter()
                outcome.reports.extend(self._trace_checks(trace, replicate, checks, ftl_comparator))
                outcome.check_seconds += time.perf_counter() - check_started

        outcome.seconds = time.perf_counter() - started
        return outcome

    # --- aggregation ----------------------------------------------------------

    def _execute(self, checks: Set[CheckName], exporter: Optional[ResultExporter] = None) -> ExperimentResult:
        """Run every replicate and fold the outcomes in replicate order"""
        config = self.config
        self._check_replicate_budget(checks)
        result = ExperimentResult(
            config=config,
            seeds=[replicate_seed(config.base_seed, r) for r in range(config.replicates)],
        )
        ekf_names = [spec.name for spec in config.learners if spec.kind == LearnerKind.EKF]
        accumulators: Dict[str, MonteCarloAccumulator] = {}
        if checks & ACCUMULATED_CHECKS:
            accumulators = {
                spec.name: MonteCarloAccumulator(config.stream.n, config.stream.d, self.theta_true,
                                                 config.localization.epsilon, spec.p1)
                for spec in config.learners if spec.kind == LearnerKind.EKF
            }
        diagnostics: Dict[str, List[BoundReport]] = {name: [] for name in ekf_names}
        envelopes: Dict[str, List[EnvelopeStats]] = {spec.name: [] for spec in config.learners}
        totals: Dict[str, Dict[str, float]] = {
            spec.name: {"cumulative_loss": 0.0, "regret": 0.0, "expected_regret": 0.0} for spec in config.learners
        }
        full_trace = config.output.full_trace and exporter is not None

        jobs = self.jobs
        batch = max(1, 2 * jobs)
        logger.info(f"Running {config.replicates} replicates with {jobs} worker(s)")
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            for start in range(0, config.replicates, batch):
                indices = range(start, min(start + batch, config.replicates))
                for outcome in executor.map(lambda r: self._run_replicate(r, checks), indices):
                    self.monitor.track_replicate(outcome.seconds)
                    self.monitor.track_checks(len(outcome.reports), outcome.check_seconds)
                    result.summary_rows.extend(outcome.summary_rows)
                    result.curve_rows.extend(outcome.curve_rows)
                    result.reports.extend(outcome.reports)
                    for row in outcome.summary_rows:
                        for key in totals[row["learner"]]:
                            totals[row["learner"]][key] += row[key] or 0.0
                    for trace in outcome.traces:
                        self.monitor.track_learner_run(trace.learner, trace.n, outcome.run_seconds[trace.learner])
                        envelopes[trace.learner].append(trace.envelope)
                        result.final_states.append({
                            "learner": trace.learner,
                            "replicate": outcome.replicate,
                            "theta_final": trace.thetas[-1].tolist(),
                            "cumulative_loss": trace.cumulative_loss,
                        })
                        if trace.learner in accumulators:
                            accumulators[trace.learner].add(trace)
                        if full_trace:
                            exporter.write_trace(trace, outcome.replicate)
                    for report in outcome.reports:
                        if report.name == CheckName.THEOREM3.value and report.kind == "diagnostic":
                            diagnostics[report.learner].append(report)
                logger.debug(f"Replicates {indices.start}..{indices.stop - 1} aggregated")

        for name, items in envelopes.items():
            result.envelopes[name] = EnvelopeStats.merge(items)
        for name, sums in totals.items():
            means = {key: value / config.replicates for key, value in sums.items()}
            if self.theta_true is None:
                means["expected_regret"] = None
            result.learner_means[name] = means

        if checks & MONTE_CARLO_CHECKS:
            started = time.perf_counter()
            before = len(result.reports)
            for name in ekf_names:
                result.reports.extend(self._monte_carlo_reports(name, checks, accumulators.get(name),
                                                                diagnostics[name], result))
            self.monitor.track_checks(len(result.reports) - before, time.perf_counter() - started)

        for report in result.failed_reports:
            where = f" replicate {report.replicate}" if report.replicate is not None else ""
            logger.warning(f"Check {report.name} failed for {report.learner}{where}: lhs={report.lhs:.6g} rhs={report.rhs:.6g}")
        result.performance = self.monitor.get_performance_report()
        return result

    def _monte_carlo_reports(self, name: str, checks: Set[CheckName], acc: Optional[MonteCarloAccumulator],
                             diagnostics: List[BoundReport], result: ExperimentResult) -> List[BoundReport]:
        reports = []
        if CheckName.THEOREM3 in checks:
            reports.append(theorem3_rate_check(diagnostics, self.config.localization.delta, name))
        if acc is None:
            return reports
        estimates = None
        if checks & ESTIMATE_CHECKS:
            estimates = estimates_from_accumulator(acc)
            result.estimates[name] = estimates
        if CheckName.ASSUMPTIONS in checks:
            reports.append(assumptions_check(estimates, name))
        if CheckName.THEOREM2 in checks:
            reports.append(theorem2_from_accumulator(acc, estimates, name))
        if CheckName.THEOREM4 in checks:
            reports.append(theorem4_from_accumulator(acc, estimates, name))
        if CheckName.DECAY in checks:
            reports.append(decay_from_accumulator(acc, name))
        if CheckName.EXPECTED_REGRET in checks:
            reports.append(growth_from_accumulator(acc, name))
        if CheckName.REGRET_INCREMENTS in checks:
            reports.append(increments_from_accumulator(acc, name))
        return reports

    # --- outputs --------------------------------------------------------------

    def _manifest(self, command: str, result: ExperimentResult) -> Dict[str, Any]:
        failing = {}
        for report in result.failed_reports:
            key = f"{report.name}/{report.learner}/r{report.replicate}"
            failing[key] = report.failing_steps()[:MAX_FAILING_STEPS]
        return {
            "version": settings.app_version,
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": self.config.model_dump(mode="json"),
            "seeds": result.seeds,
            "envelopes": {name: env.model_dump() for name, env in result.envelopes.items()},
            "results": {
                "final_states": result.final_states,
                "learner_means": result.learner_means,
            },
            "estimates": {name: est.model_dump() for name, est in result.estimates.items()},
            "checks": {
                "requested": sorted(c.value for c in self.requested_checks()) if command == "verify" else [],
                "evaluated": len(result.reports),
                "passed": result.passed,
                "failed": [f"{r.name}/{r.learner}" for r in result.failed_reports],
                "failing_steps": failing,
            },
            "bound_reports": [r.model_dump(exclude={"step_details"}) for r in result.reports],
            "performance": result.performance,
        }

    def _write_outputs(self, command: str, result: ExperimentResult, exporter: ResultExporter) -> None:
        formats = self.config.output.formats
        if "csv" in formats:
            exporter.write_summary(result.summary_rows)
            exporter.write_curves(result.curve_rows)
            if command == "verify":
                exporter.write_bound_reports(result.reports)
        if "json" in formats:
            exporter.write_manifest(self._manifest(command, result))
        logger.info(f"Wrote {len(exporter.written)} files to {exporter.output_dir}")

    # --- commands -------------------------------------------------------------

    def run(self) -> ExperimentResult:
        """Play every learner on every replicate and write summaries, curves and the manifest"""
        exporter = ResultExporter(self.config.output.resolved_dir())
        result = self._execute(set(), exporter)
        self._write_outputs("run", result, exporter)
        self.monitor.log_performance_summary()
        return result

    def verify(self) -> ExperimentResult:
        """Run and judge every requested check"""
        checks = self.requested_checks()
        if not checks:
            raise ConfigError("verify needs at least one entry in checks")
        exporter = ResultExporter(self.config.output.resolved_dir())
        result = self._execute(checks, exporter)
        self._write_outputs("verify", result, exporter)
        verdict = "PASS" if result.passed else "FAIL"
        logger.info(f"Verification {verdict}: {len(result.verdict_reports) - len(result.failed_reports)}"
                    f"/{len(result.verdict_reports)} reports satisfied")
        self.monitor.log_performance_summary()
        return result

    def config_at(self, point: Dict[str, Any]) -> ExperimentConfig:
        """
        The config of one sweep grid point

        Changing d rescales theta_true to the direction (1, ..., 1) with its original norm.
        """
        data = self.config.model_dump(mode="json")
        stream = data["stream"]
        if "n" in point:
            stream["n"] = point["n"]
        if "d" in point and point["d"] != stream["d"]:
            d = point["d"]
            stream["d"] = d
            if stream.get("theta_true") is not None:
                norm = float(np.linalg.norm(stream["theta_true"]))
                stream["theta_true"] = [norm / math.sqrt(d)] * d
        if "p1" in point:
            for learner in data["learners"]:
                learner["p1"] = point["p1"]
        if "seed" in point:
            data["base_seed"] = point["seed"]
        return validate_config(data)

    def sweep(self, grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
        """One row per grid point and learner, written as a long-format sweep.csv"""
        points = grid_points(grid)
        exporter = ResultExporter(self.config.output.resolved_dir())
        rows: List[Dict[str, Any]] = []
        point_results = []
        logger.info(f"Sweeping {len(points)} grid points over [{', '.join(grid)}]")

        for index, point in enumerate(points):
            orchestrator = ExperimentOrchestrator(self.config_at(point))
            result = orchestrator._execute(orchestrator.requested_checks())
            n = orchestrator.config.stream.n
            for name, means in result.learner_means.items():
                regret = means["expected_regret"] if means["expected_regret"] is not None else means["regret"]
                rows.append({
                    "point": index,
                    **{key: point[key] for key in grid},
                    "learner": name,
                    "replicates": orchestrator.config.replicates,
                    "mean_cumulative_loss": means["cumulative_loss"],
                    "mean_regret": means["regret"],
                    "mean_expected_regret": means["expected_regret"],
                    "regret_per_log_n": regret / math.log(n) if n > 1 else None,
                    "checks_passed": result.passed,
                })
            point_results.append({"point": index, **point, "passed": result.passed,
                                  "failed": [f"{r.name}/{r.learner}" for r in result.failed_reports]})
            logger.info(f"Grid point {index + 1}/{len(points)} {point} done")

        exporter.write_sweep(rows)
        exporter.write_manifest({
            "version": settings.app_version,
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "config": self.config.model_dump(mode="json"),
            "grid": grid,
            "results": point_results,
        })
        return rows

    @staticmethod
    def report(output_dir: Union[str, Path]) -> Dict[str, Any]:
        """Load a finished output directory: manifest plus the bound table when present"""
        manifest = read_manifest(output_dir)
        bounds = read_bound_reports(output_dir)
        return {
            "manifest": manifest,
            "bound_reports": bounds.to_dict(orient="records") if bounds is not None else [],
        }
