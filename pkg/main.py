"""
Regret Lab - Main Application Entry Point
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from loguru import logger
from rich.console import Console
from rich.table import Table

from config.settings import settings
from core.exceptions import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    InsufficientDataError,
    NonSpdError,
    NumericAbortError,
    NumericInputError,
    StreamParseError,
)
from core.orchestrator import ExperimentOrchestrator, ExperimentResult, load_config
from utils.helpers import format_list_for_display, format_number, parse_grid, truncate_text
from utils.result_exporter import ResultExporter

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CONFIG_ERRORS = (ConfigError, StreamParseError, InsufficientDataError)
NUMERIC_ERRORS = (DimensionMismatchError, NumericInputError, NonSpdError, NumericAbortError, ConvergenceError)

console = Console()

def setup_logging():
    """Configure logging for the application"""
    logger.remove()  # Remove default handler

    # Console logging
    logger.add(
        sys.stderr,
        level=settings.log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
    )

    # File logging
    logger.add(
        settings.log_file,
        level=settings.log_level,
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
        rotation="10 MB",
        retention="7 days"
    )

    logger.debug("Regret Lab logging configured")

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regret-lab",
        description="Run and verify second-order online logistic regression experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(sub: argparse.ArgumentParser):
        sub.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        sub.add_argument("--seed", type=int, default=None, help="Override base_seed")
        sub.add_argument("--jobs", type=int, default=None, help="Parallel replicate workers")
        sub.add_argument("--output-dir", type=Path, default=None,
                         help="Output directory (default: REGRET_LAB_OUTPUT_DIR or ./results)")
        sub.add_argument("--allow-slow", action="store_true", default=None,
                         help="Lift the step caps on the quadratic-time learners and checks")
        sub.add_argument("--full-trace", action="store_true", default=None, help="Write every step of every run")
        sub.add_argument("--sabotage", action="store_true", default=None,
                         help="Perturb one update per run (negative control)")

    experiment_flags(subparsers.add_parser("run", help="Run learners and write traces"))
    experiment_flags(subparsers.add_parser("verify", help="Run learners and check bounds"))
    sweep = subparsers.add_parser("sweep", help="Repeat an experiment over a parameter grid")
    experiment_flags(sweep)
    sweep.add_argument("--grid", required=True, help='Grid such as "n=100,1000,10000;p1=0.5,1"')
    report = subparsers.add_parser("report", help="Summarize a finished output directory")
    report.add_argument("output_dir", type=Path)
    return parser

def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "base_seed": args.seed,
        "jobs": args.jobs,
        "allow_slow": args.allow_slow,
        "sabotage": args.sabotage,
        "full_trace": args.full_trace,
        "output_dir": args.output_dir,
    }

def print_learner_table(result: ExperimentResult):
    table = Table(title="Learners")
    table.add_column("learner")
    table.add_column("mean loss", justify="right")
    table.add_column("mean regret", justify="right")
    table.add_column("mean expected regret", justify="right")
    table.add_column("D_X", justify="right")
    table.add_column("D_theta", justify="right")
    table.add_column("D", justify="right")
    for name, means in result.learner_means.items():
        envelope = result.envelopes[name]
        table.add_row(
            name,
            format_number(means["cumulative_loss"]),
            format_number(means["regret"]),
            format_number(means["expected_regret"]),
            format_number(envelope.d_x, 4),
            format_number(envelope.d_theta, 4),
            format_number(envelope.d_margin, 4),
        )
    console.print(table)

def print_bound_table(rows: List[Dict[str, Any]], title: str = "Bound reports"):
    """Aggregate per check and learner: worst slack and failure count"""
    grouped: Dict[tuple, Dict[str, Any]] = {}
    for row in rows:
        key = (row["name"], row.get("learner") or "-", row.get("kind", "deterministic"))
        entry = grouped.setdefault(key, {"count": 0, "failed": 0, "worst_slack": float("inf"), "note": row.get("note")})
        entry["count"] += 1
        entry["failed"] += 0 if row["satisfied"] in (True, "True", 1) else 1
        slack = float(row["slack"])
        if slack < entry["worst_slack"]:
            entry["worst_slack"], entry["note"] = slack, row.get("note")

    table = Table(title=title)
    table.add_column("check")
    table.add_column("learner")
    table.add_column("kind")
    table.add_column("reports", justify="right")
    table.add_column("failed", justify="right")
    table.add_column("worst slack", justify="right")
    table.add_column("note")
    for (name, learner, kind), entry in grouped.items():
        style = "red" if entry["failed"] and kind != "diagnostic" else None
        table.add_row(
            name, learner, kind, str(entry["count"]), str(entry["failed"]),
            format_number(entry["worst_slack"]), truncate_text(str(entry["note"] or ""), 60),
            style=style,
        )
    console.print(table)

def render_summary_text(manifest: Dict[str, Any], bound_rows: List[Dict[str, Any]]) -> str:
    """Plain-text version of the report written next to the manifest"""
    config = manifest.get("config", {})
    stream = config.get("stream", {})
    lines = [
        f"Regret Lab {manifest.get('version')} (schema {manifest.get('schema_version')})",
        f"Command: {manifest.get('command')}",
        f"Stream: {stream.get('scheme')} n={stream.get('n')} d={stream.get('d')}",
        f"Replicates: {config.get('replicates')}  base_seed: {config.get('base_seed')}",
        "",
    ]
    results = manifest.get("results")
    means = results.get("learner_means", {}) if isinstance(results, dict) else {}
    for name, values in means.items():
        lines.append(
            f"{name}: mean loss {format_number(values.get('cumulative_loss'))}, "
            f"mean regret {format_number(values.get('regret'))}, "
            f"mean expected regret {format_number(values.get('expected_regret'))}"
        )
    if bound_rows:
        failed = [row for row in bound_rows
                  if row.get("kind") != "diagnostic" and row["satisfied"] not in (True, "True", 1)]
        lines.append("")
        lines.append(f"Bound reports: {len(bound_rows)} evaluated, {len(failed)} failed")
        for row in failed:
            lines.append(f"  FAIL {row['name']} {row.get('learner')} r{row.get('replicate')}: "
                         f"lhs={format_number(row['lhs'])} rhs={format_number(row['rhs'])}")
    checks = manifest.get("checks")
    if checks and checks.get("requested"):
        lines.append(f"Verdict: {'PASS' if checks.get('passed') else 'FAIL'}")
    return "\n".join(lines)

def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, config_overrides(args))
    result = ExperimentOrchestrator(config).run()
    print_learner_table(result)
    return EXIT_OK

def cmd_verify(args: argparse.Namespace) -> int:
    config = load_config(args.config, config_overrides(args))
    result = ExperimentOrchestrator(config).verify()
    print_learner_table(result)
    print_bound_table([report.model_dump() for report in result.reports])
    if result.passed:
        console.print("[green]All checks satisfied[/green]")
        return EXIT_OK
    failed = sorted({f"{r.name}/{r.learner}" for r in result.failed_reports})
    console.print(f"[red]{len(result.failed_reports)} check report(s) failed: {format_list_for_display(failed)}[/red]")
    return EXIT_CHECK_FAILED

def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, config_overrides(args))
    grid = parse_grid(args.grid)
    rows = ExperimentOrchestrator(config).sweep(grid)

    table = Table(title="Sweep")
    for column in (*grid, "learner", "mean_regret", "mean_expected_regret", "regret_per_log_n", "checks_passed"):
        table.add_column(column)
    for row in rows:
        table.add_row(*(str(row[key]) if not isinstance(row[key], float) else format_number(row[key])
                        for key in (*grid, "learner", "mean_regret", "mean_expected_regret",
                                    "regret_per_log_n", "checks_passed")))
    console.print(table)
    return EXIT_OK if all(row["checks_passed"] for row in rows) else EXIT_CHECK_FAILED

def cmd_report(args: argparse.Namespace) -> int:
    loaded = ExperimentOrchestrator.report(args.output_dir)
    manifest, bound_rows = loaded["manifest"], loaded["bound_reports"]
    text = render_summary_text(manifest, bound_rows)
    console.print(text)
    if bound_rows:
        print_bound_table(bound_rows)
    ResultExporter(args.output_dir).write_text_summary(text)
    checks = manifest.get("checks") or {}
    if checks.get("requested") and not checks.get("passed", True):
        return EXIT_CHECK_FAILED
    return EXIT_OK

COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "report": cmd_report,
}

def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    setup_logging()
    logger.info(f"Starting {settings.app_name} {settings.app_version}: {args.command}")

    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as e:
        logger.error(f"Configuration error: {e}")
        console.print(f"[red]Configuration error:[/red] {e}")
        return EXIT_CONFIG
    except NUMERIC_ERRORS as e:
        step = getattr(e, "step", None)
        logger.error(f"Numeric abort{f' at step {step}' if step is not None else ''}: {e}")
        console.print(f"[red]Numeric abort:[/red] {e}")
        return EXIT_NUMERIC

if __name__ == "__main__":
    sys.exit(main())
